// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace vidspec {

enum class Modality : std::uint8_t { kVideo, kLanguage };

// F x H x W grid of video tokens. Flat index of (f, y, x) is f*H*W + y*W + x.
struct VideoLayout {
  int frames = 1;
  int height = 1;
  int width = 1;

  std::size_t tokens_per_frame() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return tokens_per_frame() * static_cast<std::size_t>(frames); }
  std::size_t flat_index(int f, int y, int x) const {
    return static_cast<std::size_t>(f) * tokens_per_frame() + static_cast<std::size_t>(y) * width + x;
  }
  int frame_of(std::size_t flat) const { return static_cast<int>(flat / tokens_per_frame()); }
  int row_of(std::size_t flat) const { return static_cast<int>((flat % tokens_per_frame()) / width); }
  int col_of(std::size_t flat) const { return static_cast<int>(flat % width); }

  void validate() const;
  bool operator==(const VideoLayout&) const = default;
};

struct SequenceItem {
  Modality modality = Modality::kLanguage;
  int token = -1;                // language items
  std::vector<float> embedding;  // video items

  static SequenceItem language(int token) { return {Modality::kLanguage, token, {}}; }
  static SequenceItem video(std::vector<float> embedding) {
    return {Modality::kVideo, -1, std::move(embedding)};
  }
  bool operator==(const SequenceItem&) const = default;
};

// Video items first, then language items. `positions` are the original
// (pre-pruning) position indices used for rotary encoding. `video_index[k]` is
// the flat layout index of the k-th video item.
struct MultimodalSequence {
  VideoLayout layout;
  std::vector<SequenceItem> items;
  std::vector<std::int64_t> positions;
  std::vector<std::size_t> video_index;
  bool pruned = false;

  // Positions 0..n-1, video tokens in flat layout order.
  static MultimodalSequence build(const VideoLayout& layout, std::vector<std::vector<float>> video,
                                  const std::vector<int>& language);

  std::size_t size() const { return items.size(); }
  std::size_t num_video() const { return video_index.size(); }
  std::size_t num_language() const { return items.size() - video_index.size(); }

  // Throws ShapeError / OrderingError when the invariants do not hold.
  void validate() const;
  bool operator==(const MultimodalSequence&) const = default;
};

}  // namespace vidspec
