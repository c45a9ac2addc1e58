#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

/// Checkpoint container: a text manifest (ordered key = value lines)
/// followed by named float32 blobs, each preceded by a dimension header.
/// Round-trips bit-exactly.
///
///   CMCRL1
///   manifest <bytes>
///   <manifest text>
///   blob <name> <rank> <d0> [<d1> ...]
///   <raw float32 little-endian data>
///   ...
///   end
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> manifest;
  std::vector<std::pair<std::string, Tensor<float>>> blobs;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : manifest) {
      if (k == key) {
        v = value;
        return;
      }
    }
    manifest.emplace_back(key, value);
  }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : manifest)
      if (k == key) return v;
    return std::nullopt;
  }

  void add_blob(const std::string& name, Tensor<float> t) {
    blobs.emplace_back(name, std::move(t));
  }

  const Tensor<float>* find_blob(const std::string& name) const {
    for (const auto& [n, t] : blobs)
      if (n == name) return &t;
    return nullptr;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open checkpoint for writing: " + path);
    std::ostringstream mtext;
    for (const auto& [k, v] : manifest) mtext << k << " = " << v << "\n";
    const std::string m = mtext.str();
    out << "CMCRL1\n";
    out << "manifest " << m.size() << "\n";
    out.write(m.data(), static_cast<std::streamsize>(m.size()));
    for (const auto& [name, t] : blobs) {
      out << "blob " << name << " " << t.rank();
      for (std::size_t i = 0; i < t.rank(); ++i) out << " " << t.dim(i);
      out << "\n";
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    out << "end\n";
    if (!out) throw io_error("write failure for checkpoint: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("checkpoint not found: " + path);
    Checkpoint ck;
    std::string line;
    if (!std::getline(in, line) || line != "CMCRL1")
      throw io_error("not a checkpoint file: " + path);
    while (std::getline(in, line)) {
      if (line == "end") return ck;
      std::istringstream hdr(line);
      std::string tag;
      hdr >> tag;
      if (tag == "manifest") {
        std::size_t bytes = 0;
        hdr >> bytes;
        std::string m(bytes, '\0');
        in.read(m.data(), static_cast<std::streamsize>(bytes));
        if (!in) throw io_error("truncated manifest in " + path);
        std::istringstream ms(m);
        std::string mline;
        while (std::getline(ms, mline)) {
          const auto eq = mline.find(" = ");
          if (eq == std::string::npos) continue;
          ck.manifest.emplace_back(mline.substr(0, eq), mline.substr(eq + 3));
        }
      } else if (tag == "blob") {
        std::string name;
        std::size_t rank = 0;
        hdr >> name >> rank;
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) hdr >> d;
        if (!hdr) throw io_error("bad blob header in " + path);
        Tensor<float> t(dims);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw io_error("truncated blob '" + name + "' in " + path);
        ck.blobs.emplace_back(std::move(name), std::move(t));
      } else {
        throw io_error("unknown record '" + tag + "' in " + path);
      }
    }
    throw io_error("missing end marker in " + path);
  }
};

}  // namespace cmcrl
