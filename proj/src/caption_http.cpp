// Kept apart from data.cpp so only one translation unit pulls in httplib.
#include "tcfoley/data.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace tcfoley::data {

HttpCaptionProvider::HttpCaptionProvider(std::string url, std::chrono::milliseconds timeout, std::string bearer_token)
    : url_(std::move(url)), timeout_(timeout), token_(std::move(bearer_token)) {
  if (url_.empty()) throw usage_error("caption endpoint URL is empty");
  if (timeout_.count() <= 0) throw usage_error("caption timeout must be positive");
}

std::string HttpCaptionProvider::describe(const CaptionRequest& req) {
  const std::string prompt = build_caption_prompt(req);

  // Split "scheme://host[:port]" from the path.
  const auto scheme_end = url_.find("://");
  const auto path_start = url_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url_ : url_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url_.substr(path_start);

  httplib::Client client(origin);
  if (!client.is_valid()) throw CaptionError(CaptionErrorCode::kNetwork, "invalid caption endpoint " + url_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  client.set_read_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  client.set_write_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  if (!token_.empty()) client.set_bearer_token_auth(token_);

  const std::string body = nlohmann::json{{"prompt", prompt}}.dump();
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = "caption request to " + url_ + " failed: " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
      throw CaptionError(CaptionErrorCode::kTimeout, what);
    throw CaptionError(CaptionErrorCode::kNetwork, what);
  }
  if (res->status < 200 || res->status >= 300)
    throw CaptionError(CaptionErrorCode::kStatus,
                       "caption endpoint " + url_ + " returned HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body).at("caption").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw CaptionError(CaptionErrorCode::kBadResponse, std::string("malformed caption response: ") + ex.what());
  }
}

}  // namespace tcfoley::data
