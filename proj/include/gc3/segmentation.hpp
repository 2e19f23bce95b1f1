#pragma once

// 50%-overlap segmentation along axis 0 with zero padding at both ends:
// `hop` frames in front, and enough at the back that blocks tile the padded
// sequence. Every input frame is covered by exactly two blocks.

#include "gc3/tensor.hpp"

namespace gc3 {

struct Segmentation {
  std::size_t length = 0;  // T
  std::size_t size = 0;    // block length, even
  std::size_t blocks = 0;  // R = ceil(T / hop) + 1

  static Segmentation plan(std::size_t length, std::size_t size);
  std::size_t hop() const { return size / 2; }
  std::size_t pad_front() const { return hop(); }
  std::size_t pad_back() const { return (blocks - 1) * hop() + size - length - hop(); }
};

/// x [T×...] -> [R×size×...].
Tensor segment(const Tensor& x, const Segmentation& seg);
/// Inverse of segment: overlap-add, trim the padding, divide by coverage.
Tensor unsegment(const Tensor& blocks, const Segmentation& seg);

}  // namespace gc3
