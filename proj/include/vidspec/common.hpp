// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace vidspec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class MaskError : public Error {
 public:
  using Error::Error;
};

class PlanError : public Error {
 public:
  using Error::Error;
};

class DegenerateGuidanceError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

class LosslessnessViolation : public Error {
 public:
  using Error::Error;
};

// Half-away-from-zero rounding, independent of the current FP rounding mode.
inline std::int64_t round_half_away(double x) {
  return static_cast<std::int64_t>(std::round(x));
}

// Number of video tokens kept for pruning ratio `ratio` over `num_video` tokens.
inline std::size_t retained_budget(std::size_t num_video, double ratio) {
  return static_cast<std::size_t>(round_half_away((1.0 - ratio) * static_cast<double>(num_video)));
}

// Greedy argmax; ties go to the lowest token id.
inline int argmax(std::span<const float> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  }
  return best;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  void reset() { start_ = std::chrono::steady_clock::now(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace vidspec
