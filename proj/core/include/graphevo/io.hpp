#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gevo {

/// Shortest round-trip decimal form for a double ("inf"/"-inf"/"nan" kept).
inline std::string dtos(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double stod_exact(const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{})
    throw std::runtime_error("bad double literal: " + s);
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(f),
                     std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw std::runtime_error("short write " + path);
}

/// Little-endian binary writer for checkpoint state.
class BinWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) { raw(&v, sizeof(v)); }
  void i64(int64_t v) { raw(&v, sizeof(v)); }
  void u64(uint64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    if (!v.empty()) raw(v.data(), v.size() * sizeof(double));
  }
  const std::string& data() const { return buf_; }

 private:
  void raw(const void* p, size_t n) {
    buf_.append(reinterpret_cast<const char*>(p), n);
  }
  std::string buf_;
};

class BinReader {
 public:
  explicit BinReader(std::string data) : data_(std::move(data)) {}
  uint8_t u8() { return static_cast<uint8_t>(data_.at(take(1))); }
  uint32_t u32() { return get<uint32_t>(); }
  int64_t i64() { return get<int64_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    size_t n = u64();
    size_t off = take(n);
    return data_.substr(off, n);
  }
  std::vector<double> doubles() {
    size_t n = u64();
    std::vector<double> v(n);
    if (n) std::memcpy(v.data(), data_.data() + take(n * sizeof(double)),
                       n * sizeof(double));
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  template <class T>
  T get() {
    T v;
    std::memcpy(&v, data_.data() + take(sizeof(T)), sizeof(T));
    return v;
  }
  size_t take(size_t n) {
    if (pos_ + n > data_.size())
      throw std::runtime_error("truncated binary state");
    size_t off = pos_;
    pos_ += n;
    return off;
  }
  std::string data_;
  size_t pos_ = 0;
};

}  // namespace gevo
