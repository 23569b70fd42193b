#pragma once

#include "tcfoley/common.hpp"

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tcfoley {

/// Flat registry of named parameter matrices. Every model registers its
/// tensors here under a prefix ("base.", "adapter.", ...) and refers to them
/// by slot index, so forwards stay const and gradients live elsewhere.
template <typename Scalar>
class ParamSet {
 public:
  std::size_t add(const std::string& name, Mat<Scalar> init, bool trainable = true) {
    if (lookup_.count(name)) throw Error(ErrorKind::kInternal, "duplicate parameter " + name);
    lookup_[name] = values_.size();
    names_.push_back(name);
    values_.push_back(std::move(init));
    trainable_.push_back(trainable);
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  const Mat<Scalar>& operator[](std::size_t i) const { return values_[i]; }
  Mat<Scalar>& mutable_value(std::size_t i) { return values_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  bool trainable(std::size_t i) const { return trainable_[i]; }

  bool contains(const std::string& name) const { return lookup_.count(name) != 0; }
  std::size_t index(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw Error(ErrorKind::kData, "unknown parameter " + name);
    return it->second;
  }

  /// Marks every tensor whose name starts with `prefix`.
  void set_trainable(std::string_view prefix, bool on) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (std::string_view(names_[i]).starts_with(prefix)) trainable_[i] = on;
  }

  void set_trainable_at(std::size_t i, bool on) { trainable_[i] = on; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    for (std::size_t i = 0; i < values_.size(); ++i) out.add(names_[i], values_[i].template cast<Other>(), trainable_[i]);
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<Scalar>> values_;
  std::vector<bool> trainable_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

/// Gradient buffers shaped like a ParamSet. Slots that are inactive are left
/// empty and layers skip their weight-gradient work for them.
template <typename Scalar>
class GradSet {
 public:
  GradSet() = default;
  /// `all` = true allocates every slot; otherwise only trainable ones.
  GradSet(const ParamSet<Scalar>& p, bool all) : grads_(p.size()), active_(p.size(), false) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (all || p.trainable(i)) {
        grads_[i] = Mat<Scalar>::Zero(p[i].rows(), p[i].cols());
        active_[i] = true;
      }
    }
  }

  bool active(std::size_t i) const { return active_[i]; }
  Mat<Scalar>& operator[](std::size_t i) { return grads_[i]; }
  const Mat<Scalar>& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void set_zero() {
    for (std::size_t i = 0; i < grads_.size(); ++i)
      if (active_[i]) grads_[i].setZero();
  }

  GradSet& operator+=(const GradSet& o) {
    for (std::size_t i = 0; i < grads_.size(); ++i)
      if (active_[i] && o.active_[i]) grads_[i] += o.grads_[i];
    return *this;
  }

  void scale(Scalar s) {
    for (std::size_t i = 0; i < grads_.size(); ++i)
      if (active_[i]) grads_[i] *= s;
  }

 private:
  std::vector<Mat<Scalar>> grads_;
  std::vector<bool> active_;
};

}  // namespace tcfoley
