#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fbttr/errors.hpp"
#include "fbttr/tensor.hpp"

namespace fbttr::binary {

// Little-endian writer; byte order is fixed regardless of the host.
class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

  void count(std::size_t n) {
    if (n > UINT32_MAX) throw ShapeError("array too large for a 32-bit count");
    u32(static_cast<std::uint32_t>(n));
  }
  void f64_array(std::span<const double> v) {
    count(v.size());
    for (double x : v) f64(x);
  }
  void extents(const Extents& e) {
    count(e.size());
    for (auto x : e) count(x);
  }
  void tensor(const Tensor& t) {
    extents(t.shape());
    f64_array(t.data());
  }
  // rows, cols, then row-major data.
  void matrix(const Matrix& m) {
    count(static_cast<std::size_t>(m.rows()));
    count(static_cast<std::size_t>(m.cols()));
    count(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  void vector(const Vector& v) { f64_array({v.data(), static_cast<std::size_t>(v.size())}); }
  void string(std::string_view s) {
    count(s.size());
    bytes(s);
  }

  std::vector<unsigned char>& buffer() { return out_; }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> out_;
};

template <typename E>
class Reader {
 public:
  explicit Reader(std::span<const unsigned char> in) : in_(in) {}

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::size_t count() { return u32(); }
  std::vector<double> f64_array() {
    const std::size_t n = count();
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  Extents extents() {
    const std::size_t n = count();
    need(n * 4);
    Extents e(n);
    for (auto& x : e) x = count();
    return e;
  }
  Tensor tensor() {
    auto shape = extents();
    auto data = f64_array();
    try {
      return Tensor(std::move(shape), std::move(data));
    } catch (const Error& ex) {
      throw E(std::string("malformed tensor: ") + ex.what());
    }
  }
  Matrix matrix() {
    const std::size_t rows = count();
    const std::size_t cols = count();
    const std::size_t n = count();
    if (n != rows * cols) throw E("malformed matrix: element count mismatch");
    need(n * 8);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = f64();
    return m;
  }
  Vector vector() {
    const auto v = f64_array();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  std::string string() { return bytes(count()); }

  bool done() const { return pos_ == in_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - pos_) throw E("truncated input");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::span<const unsigned char> in_;
  std::size_t pos_ = 0;
};

}  // namespace fbttr::binary
