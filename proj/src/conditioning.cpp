#include "tcfoley/conditioning.hpp"

namespace tcfoley::conditioning {

ConditionSpec build_condition(const timeline::BinaryTimeline& t, Eigen::Index n_mels, Eigen::Index n_frames,
                              ConditionMode mode, const dsp::MelSpectrogram* reference) {
  if (n_mels < 1 || n_frames < 1) throw data_error("condition shape must be positive");
  if (static_cast<Eigen::Index>(t.size()) != n_frames)
    throw data_error("timeline has " + std::to_string(t.size()) + " frames but the mel grid has " +
                     std::to_string(n_frames) + "; resample it first");
  ConditionSpec spec;
  spec.frame_rate = t.frame_rate;
  spec.values = MatrixXd::Zero(n_mels, n_frames);
  if (mode == ConditionMode::kMaxWithMel) {
    if (reference == nullptr) throw usage_error("max-with-mel condition needs a reference mel");
    if (!reference->normalized) throw data_error("reference mel must be normalized");
    if (reference->values.rows() != n_mels || reference->values.cols() != n_frames)
      throw data_error("reference mel shape " + std::to_string(reference->values.rows()) + "x" +
                       std::to_string(reference->values.cols()) + " does not match the condition shape");
    spec.values = reference->values;
  }
  for (Eigen::Index j = 0; j < n_frames; ++j)
    if (t.bits[static_cast<std::size_t>(j)]) spec.values.col(j).setOnes();
  return spec;
}

}  // namespace tcfoley::conditioning
