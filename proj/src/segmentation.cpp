#include "gc3/segmentation.hpp"

#include "gc3/errors.hpp"

namespace gc3 {

Segmentation Segmentation::plan(std::size_t length, std::size_t size) {
  if (size < 2 || size % 2 != 0) throw ConfigError("segment size", "must be even and >= 2, got " + std::to_string(size));
  if (length == 0) throw DimensionError("segment: empty sequence");
  const std::size_t hop = size / 2;
  return {length, size, (length + hop - 1) / hop + 1};
}

Tensor segment(const Tensor& x, const Segmentation& seg) {
  if (x.rank() == 0 || x.dim(0) != seg.length) {
    throw DimensionError("segment: expected " + std::to_string(seg.length) + " frames, got " + shape_str(x.shape()));
  }
  return frames(pad(x, 0, seg.pad_front(), seg.pad_back()), 0, seg.size, seg.hop());
}

Tensor unsegment(const Tensor& blocks, const Segmentation& seg) {
  if (blocks.rank() < 2 || blocks.dim(0) != seg.blocks || blocks.dim(1) != seg.size) {
    throw DimensionError("unsegment: expected " + std::to_string(seg.blocks) + " blocks of " +
                         std::to_string(seg.size) + " frames, got " + shape_str(blocks.shape()));
  }
  // Inside the trimmed range every frame sits in exactly two blocks.
  return scale(slice(overlap_add(blocks, 0, seg.hop()), 0, seg.pad_front(), seg.length), 0.5);
}

}  // namespace gc3
