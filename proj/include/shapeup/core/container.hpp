#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapeup {

// Versioned binary container of named float32 tensors.
// Layout: magic "TNS1", u32 tensor count, then per tensor:
//   u32 name length, name bytes, u32 rows, u32 cols, rows*cols float32
//   (row-major).
// Used for model checkpoints and the posterior cache.
class TensorContainer {
public:
  using MatF =
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  void put(const std::string& name, const Eigen::Ref<const MatF>& m) {
    tensors_[name] = m;
  }

  template <class Derived>
  void put_any(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
    tensors_[name] = m.template cast<float>();
  }

  bool has(const std::string& name) const { return tensors_.count(name) > 0; }

  const MatF& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      throw std::runtime_error("TensorContainer: missing tensor '" + name + "'");
    return it->second;
  }

  const std::map<std::string, MatF>& all() const { return tensors_; }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("TensorContainer: cannot write " + path);
    f.write("TNS1", 4);
    write_u32(f, std::uint32_t(tensors_.size()));
    for (const auto& [name, m] : tensors_) {
      write_u32(f, std::uint32_t(name.size()));
      f.write(name.data(), std::streamsize(name.size()));
      write_u32(f, std::uint32_t(m.rows()));
      write_u32(f, std::uint32_t(m.cols()));
      f.write(reinterpret_cast<const char*>(m.data()),
              std::streamsize(sizeof(float) * std::size_t(m.size())));
    }
    if (!f) throw std::runtime_error("TensorContainer: write failed " + path);
  }

  static TensorContainer load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("TensorContainer: cannot read " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "TNS1")
      throw std::runtime_error("TensorContainer: bad magic in " + path);
    TensorContainer c;
    const std::uint32_t n = read_u32(f, path);
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t len = read_u32(f, path);
      std::string name(len, '\0');
      f.read(name.data(), len);
      const std::uint32_t rows = read_u32(f, path);
      const std::uint32_t cols = read_u32(f, path);
      MatF m(rows, cols);
      f.read(reinterpret_cast<char*>(m.data()),
             std::streamsize(sizeof(float) * std::size_t(m.size())));
      if (!f) throw std::runtime_error("TensorContainer: truncated " + path);
      c.tensors_[name] = std::move(m);
    }
    return c;
  }

  // FNV-1a over the serialized payload; used for determinism contracts.
  std::uint64_t checksum() const {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](const char* p, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        h ^= (unsigned char)p[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& [name, m] : tensors_) {
      mix(name.data(), name.size());
      mix(reinterpret_cast<const char*>(m.data()),
          sizeof(float) * std::size_t(m.size()));
    }
    return h;
  }

private:
  static void write_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  static std::uint32_t read_u32(std::ifstream& f, const std::string& path) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw std::runtime_error("TensorContainer: truncated " + path);
    return v;
  }

  std::map<std::string, MatF> tensors_;
};

}  // namespace shapeup
