#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvote/geometry.h"

namespace pvote {

// Pixel (col, row) has its center at integer coordinates (col, row).
inline Vec2 pixel_position(std::size_t index, int width) {
  return {static_cast<double>(index % static_cast<std::size_t>(width)),
          static_cast<double>(index / static_cast<std::size_t>(width))};
}

struct SegmentationMask {
  int width = 0;
  int height = 0;
  // Row-major object ids, 0 = background.
  std::vector<std::uint8_t> labels;

  SegmentationMask() = default;
  SegmentationMask(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int col, int row) const { return labels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int col, int row) { return labels[static_cast<std::size_t>(row) * width + col]; }
  bool on_object(std::size_t index) const { return labels[index] != 0; }
  std::size_t count_on_object() const;
  // Row-major linear indices of on-object pixels.
  std::vector<int> object_pixels() const;
  // Throws DimensionMismatch if labels.size() != width * height.
  void validate() const;
};

// Per-pixel, per-keypoint 2D directions. Storage is row-major over pixels
// with the keypoint index fastest: element (col, row, k) lives at
// ((row * width + col) * K + k).
class VectorField {
 public:
  VectorField() = default;
  VectorField(int width, int height, int num_keypoints);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_keypoints() const { return num_keypoints_; }

  Vec2 at(std::size_t pixel, int k) const {
    const std::size_t i = (pixel * num_keypoints_ + k) * 2;
    return {data_[i], data_[i + 1]};
  }
  void set(std::size_t pixel, int k, const Vec2& v) {
    const std::size_t i = (pixel * num_keypoints_ + k) * 2;
    data_[i] = v.x();
    data_[i + 1] = v.y();
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const VectorField& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int num_keypoints_ = 0;
  std::vector<double> data_;
};

struct NoiseConfig {
  double angular_sigma = 0.0;  // radians
  double outlier_rate = 0.0;   // fraction in [0, 1]
  std::uint64_t seed = 0;

  void validate() const;
  bool is_noiseless() const { return angular_sigma == 0.0 && outlier_rate == 0.0; }
};

// Unit directions from every on-object pixel toward each keypoint.
// Keypoints may lie outside the image. Background pixels, and pixels that
// coincide with a keypoint, hold (0, 0).
VectorField gt_vector_field(const SegmentationMask& mask, const std::vector<Vec2>& keypoints2d);

// Rotates each on-object direction by an angle drawn from N(0, sigma^2), or
// with probability outlier_rate replaces it with a uniformly random unit
// vector. Each row draws from its own stream derived from (seed, row), so
// the output does not depend on evaluation order.
VectorField corrupt_field(VectorField field, const SegmentationMask& mask, const NoiseConfig& cfg);

double smooth_l1(double d);

// Sum over keypoints and on-object pixels of smooth-L1 on the x and y
// components of (pred - gt).
double smooth_l1_loss(const VectorField& pred, const VectorField& gt, const SegmentationMask& mask);

// Binary field dump: "PVF1", u32 width, u32 height, u32 K (little endian),
// then width*height*K*2 float32 values in storage order.
void write_field(const std::string& path, const VectorField& field);
VectorField read_field(const std::string& path);
std::vector<std::uint8_t> encode_field(const VectorField& field);
VectorField decode_field(const std::vector<std::uint8_t>& bytes);

// Binary PGM (P5, maxval 255). Labels are written verbatim.
void write_mask_pgm(const std::string& path, const SegmentationMask& mask);
SegmentationMask read_mask_pgm(const std::string& path);

}  // namespace pvote
