#include "invreg/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "invreg/errors.hpp"

namespace invreg {

Image::Image(int rows, int cols, int channels, double fill)
    : rows_(rows), cols_(cols), channels_(channels) {
  if (rows < 0 || cols < 0 || channels < 0) throw ConfigError("negative image dimension");
  data_.assign(static_cast<std::size_t>(rows) * cols * channels, fill);
}

Image Image::channel(int k) const {
  Image out(rows_, cols_, 1);
  auto src = plane(k);
  std::copy(src.begin(), src.end(), out.data_.begin());
  return out;
}

void Image::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Image& Image::operator+=(const Image& o) {
  if (!same_shape(o)) throw ConfigError("image shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& o) {
  if (!same_shape(o)) throw ConfigError("image shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Image Image::placed(int out_rows, int out_cols, int di, int dj) const {
  Image out(out_rows, out_cols, channels_);
  for (int k = 0; k < channels_; ++k)
    for (int i = 0; i < rows_; ++i) {
      int oi = i + di;
      if (oi < 0 || oi >= out_rows) continue;
      for (int j = 0; j < cols_; ++j) {
        int oj = j + dj;
        if (oj < 0 || oj >= out_cols) continue;
        out(oi, oj, k) = (*this)(i, j, k);
      }
    }
  return out;
}

bool Image::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(double s, Image a) { return a *= s; }

double dot(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ConfigError("image shape mismatch in dot");
  double s = 0.0;
  const auto& x = a.data();
  const auto& y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double squared_norm(const Image& a) { return dot(a, a); }

double sum(const Image& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

Image stack_channels(std::span<const Image> planes) {
  if (planes.empty()) return {};
  const int r = planes.front().rows();
  const int c = planes.front().cols();
  int total = 0;
  for (const auto& p : planes) {
    if (p.rows() != r || p.cols() != c) throw ConfigError("stack_channels: shape mismatch");
    total += p.channels();
  }
  Image out(r, c, total);
  int k = 0;
  for (const auto& p : planes)
    for (int pk = 0; pk < p.channels(); ++pk, ++k) {
      auto src = p.plane(pk);
      std::copy(src.begin(), src.end(), out.plane(k).begin());
    }
  return out;
}

SupportMask::SupportMask(int rows, int cols, bool value)
    : rows_(rows), cols_(cols), bits_(static_cast<std::size_t>(rows) * cols, value ? 1 : 0) {}

std::size_t SupportMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

SupportMask SupportMask::nonzero(const Image& image, double tol) {
  SupportMask m(image.rows(), image.cols());
  for (int k = 0; k < image.channels(); ++k)
    for (int i = 0; i < image.rows(); ++i)
      for (int j = 0; j < image.cols(); ++j)
        if (std::abs(image(i, j, k)) > tol) m.set(i, j);
  return m;
}

Image SupportMask::project(const Image& x) const {
  if (x.rows() != rows_ || x.cols() != cols_) throw ConfigError("mask/image shape mismatch");
  Image out = x;
  for (int k = 0; k < x.channels(); ++k) {
    auto p = out.plane(k);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!bits_[i]) p[i] = 0.0;
  }
  return out;
}

Image SupportMask::project_complement(const Image& x) const { return complement().project(x); }

SupportMask SupportMask::complement() const {
  SupportMask m = *this;
  for (auto& b : m.bits_) b = b ? 0 : 1;
  return m;
}

SupportMask SupportMask::placed(int out_rows, int out_cols, int di, int dj) const {
  SupportMask out(out_rows, out_cols);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) {
      int oi = i + di, oj = j + dj;
      if (contains(i, j) && oi >= 0 && oj >= 0 && oi < out_rows && oj < out_cols) out.set(oi, oj);
    }
  return out;
}

Image SupportMask::as_image() const {
  Image out(rows_, cols_, 1);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.data()[i] = bits_[i];
  return out;
}

SupportMask dilate(const SupportMask& mask, double radius) {
  if (radius < 0) throw ConfigError("dilate: negative radius");
  const int r = static_cast<int>(std::ceil(radius));
  if (r == 0) return mask;
  const int m = mask.rows(), n = mask.cols();
  // Separable max filter: rows then columns.
  SupportMask rowpass(m, n);
  for (int i = 0; i < m; ++i) {
    // nearest member to the left, then to the right
    int last = -1000000;
    std::vector<int> left(n), right(n);
    for (int j = 0; j < n; ++j) {
      if (mask.contains(i, j)) last = j;
      left[j] = last;
    }
    last = 1000000;
    for (int j = n - 1; j >= 0; --j) {
      if (mask.contains(i, j)) last = j;
      right[j] = last;
    }
    for (int j = 0; j < n; ++j)
      if (j - left[j] <= r || right[j] - j <= r) rowpass.set(i, j);
  }
  SupportMask out(m, n);
  for (int j = 0; j < n; ++j) {
    std::vector<int> up(m), down(m);
    int last = -1000000;
    for (int i = 0; i < m; ++i) {
      if (rowpass.contains(i, j)) last = i;
      up[i] = last;
    }
    last = 1000000;
    for (int i = m - 1; i >= 0; --i) {
      if (rowpass.contains(i, j)) last = i;
      down[i] = last;
    }
    for (int i = 0; i < m; ++i)
      if (i - up[i] <= r || down[i] - i <= r) out.set(i, j);
  }
  return out;
}

DeformationField DeformationField::identity(int rows, int cols) {
  DeformationField f(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      f.t0[std::size_t(i) * cols + j] = i;
      f.t1[std::size_t(i) * cols + j] = j;
    }
  return f;
}

DeformationField DeformationField::shifted(double d0, double d1) const {
  DeformationField f = *this;
  for (auto& v : f.t0) v += d0;
  for (auto& v : f.t1) v += d1;
  return f;
}

}  // namespace invreg
