#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace invreg {

/// Dense multichannel image on the integer grid {0..rows-1} x {0..cols-1}.
///
/// Samples are stored planar (one rows*cols plane per channel). Reads outside
/// the index range are defined to be zero everywhere in this library.
class Image {
 public:
  Image() = default;
  Image(int rows, int cols, int channels, double fill = 0.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(rows_) * cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int i, int j, int k = 0) { return data_[index(i, j, k)]; }
  double operator()(int i, int j, int k = 0) const { return data_[index(i, j, k)]; }

  /// Zero outside the grid.
  double at(int i, int j, int k = 0) const {
    if (i < 0 || j < 0 || i >= rows_ || j >= cols_) return 0.0;
    return data_[index(i, j, k)];
  }

  std::span<double> plane(int k) { return {data_.data() + k * plane_size(), plane_size()}; }
  std::span<const double> plane(int k) const {
    return {data_.data() + k * plane_size(), plane_size()};
  }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && channels_ == other.channels_;
  }

  Image channel(int k) const;
  void fill(double v);

  Image& operator+=(const Image& o);
  Image& operator-=(const Image& o);
  Image& operator*=(double s);

  /// Copy with the grid shifted so pixel (i, j) of this image lands at
  /// (i + di, j + dj) of a rows x cols output; everything else is zero.
  Image placed(int out_rows, int out_cols, int di, int dj) const;

  bool all_finite() const;

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * rows_ + i) * cols_ + j;
  }

  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

/// Frobenius inner product over all channels.
double dot(const Image& a, const Image& b);
double squared_norm(const Image& a);
double sum(const Image& a);

/// Stack single-channel images as channels of one image.
Image stack_channels(std::span<const Image> planes);

/// Membership set on an m x n grid; P_Omega is multiplication by the indicator.
class SupportMask {
 public:
  SupportMask() = default;
  SupportMask(int rows, int cols, bool value = false);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool contains(int i, int j) const {
    if (i < 0 || j < 0 || i >= rows_ || j >= cols_) return false;
    return bits_[static_cast<std::size_t>(i) * cols_ + j] != 0;
  }
  void set(int i, int j, bool v = true) {
    bits_[static_cast<std::size_t>(i) * cols_ + j] = v ? 1 : 0;
  }
  std::size_t count() const;

  /// Pixels where any channel of the image is nonzero.
  static SupportMask nonzero(const Image& image, double tol = 0.0);

  /// Orthogonal projection onto images supported on the mask.
  Image project(const Image& x) const;
  /// Projection onto the complement.
  Image project_complement(const Image& x) const;
  SupportMask complement() const;

  SupportMask placed(int out_rows, int out_cols, int di, int dj) const;
  Image as_image() const;

  friend bool operator==(const SupportMask&, const SupportMask&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// All pixels within Chebyshev distance ceil(radius) of the mask.
SupportMask dilate(const SupportMask& mask, double radius);

/// Target coordinates (tau0 = row, tau1 = col) for every output pixel.
struct DeformationField {
  DeformationField() = default;
  DeformationField(int r, int c) : rows(r), cols(c), t0(std::size_t(r) * c), t1(std::size_t(r) * c) {}

  int rows = 0;
  int cols = 0;
  std::vector<double> t0;
  std::vector<double> t1;

  std::size_t size() const { return t0.size(); }
  static DeformationField identity(int rows, int cols);
  /// Adds a constant offset to every target coordinate.
  DeformationField shifted(double d0, double d1) const;
};

}  // namespace invreg
