#pragma once

#include <optional>
#include <string>

#include "gateseg/features.hpp"
#include "gateseg/mask.hpp"

namespace gateseg {

/// One referring expression with its ground truth, prediction and optional
/// existence estimate. The transcript is the post-ASR text of the audio query.
struct QueryRecord {
  std::string query_id;
  std::string sequence_id;
  std::string transcript;
  MaskSequence gt;
  MaskSequence pred;
  std::optional<double> existence_prob;
  std::optional<FeatureTensor> features;
};

} // namespace gateseg
