#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lmsc/error.hpp"

namespace lmsc {

/// Amplitude samples r_1..r_n. `positions` is either empty or holds the
/// along-track position (meters) of each sample.
struct ObservationSequence {
  std::vector<double> values;
  std::vector<double> positions;
  double spacing_m = 0.0;  // 0 when not produced by spatial down-sampling
  std::string source;

  std::size_t size() const noexcept { return values.size(); }

  void validate() const {
    if (values.empty()) throw Error(ErrorKind::invalid_input, "observation sequence is empty");
    for (double v : values) {
      if (!std::isfinite(v)) throw Error(ErrorKind::invalid_input, "observation sequence has non-finite entry");
    }
    if (!positions.empty() && positions.size() != values.size()) {
      throw Error(ErrorKind::invalid_input, "positions and values differ in length");
    }
  }
};

}  // namespace lmsc
