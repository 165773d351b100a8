// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/sequence.hpp"

#include <string>

#include "vidspec/common.hpp"

namespace vidspec {

void VideoLayout::validate() const {
  if (frames < 1 || height < 1 || width < 1) {
    throw ConfigError("video layout dimensions must be >= 1, got " + std::to_string(frames) + "x" +
                      std::to_string(height) + "x" + std::to_string(width));
  }
}

MultimodalSequence MultimodalSequence::build(const VideoLayout& layout, std::vector<std::vector<float>> video,
                                             const std::vector<int>& language) {
  layout.validate();
  if (video.size() != layout.size()) {
    throw ShapeError("expected " + std::to_string(layout.size()) + " video embeddings, got " +
                     std::to_string(video.size()));
  }
  MultimodalSequence seq;
  seq.layout = layout;
  seq.items.reserve(video.size() + language.size());
  for (std::size_t i = 0; i < video.size(); ++i) {
    seq.items.push_back(SequenceItem::video(std::move(video[i])));
    seq.video_index.push_back(i);
  }
  for (int tok : language) seq.items.push_back(SequenceItem::language(tok));
  seq.positions.resize(seq.items.size());
  for (std::size_t i = 0; i < seq.positions.size(); ++i) seq.positions[i] = static_cast<std::int64_t>(i);
  return seq;
}

void MultimodalSequence::validate() const {
  layout.validate();
  if (positions.size() != items.size()) throw ShapeError("positions/items length mismatch");
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (positions[i] <= positions[i - 1]) throw OrderingError("positions must be strictly increasing");
  }
  std::size_t n_video = 0;
  bool seen_language = false;
  for (const auto& item : items) {
    if (item.modality == Modality::kVideo) {
      if (seen_language) throw OrderingError("video items must precede language items");
      ++n_video;
    } else {
      seen_language = true;
    }
  }
  if (n_video != video_index.size()) throw ShapeError("video_index does not match video item count");
  for (std::size_t k = 0; k < video_index.size(); ++k) {
    if (video_index[k] >= layout.size()) throw ShapeError("video index outside layout");
    if (k > 0 && video_index[k] <= video_index[k - 1]) throw OrderingError("video_index must be increasing");
  }
  if (!pruned && n_video != layout.size()) {
    throw ShapeError("unpruned sequence must carry F*H*W video items");
  }
}

}  // namespace vidspec
