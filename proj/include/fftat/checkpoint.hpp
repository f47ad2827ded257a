#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fftat/config.hpp"
#include "fftat/params.hpp"
#include "fftat/tensor.hpp"
#include "fftat/transfer.hpp"

namespace fftat {

// Checkpoint layout: magic line, little-endian u64 header length, JSON
// header (dtype, step, seed, config hash, buffer manifest), then the raw
// buffers in manifest order: params (visit order), momentum (visit order),
// graph matrix. Buffers are the run's native precision, so an f64 resume is
// bit-exact.

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline constexpr char kCkptMagic[] = "FFTAT1\n";

template <typename T>
const char* dtype_name() {
  if constexpr (sizeof(T) == 4)
    return "f32";
  else
    return "f64";
}

template <typename T>
struct Checkpoint {
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  ModelParamsT<Tensor<T>> params;
  ModelParamsT<Tensor<T>> momentum;
  TransferGraph<T> graph;
};

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ck) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<const std::vector<T>*> buffers;
  auto add = [&](const std::string& name, const Shape& shape, const std::vector<T>& data) {
    manifest.push_back({{"name", name}, {"shape", shape}});
    buffers.push_back(&data);
  };
  auto& params = const_cast<ModelParamsT<Tensor<T>>&>(ck.params);
  auto& momentum = const_cast<ModelParamsT<Tensor<T>>&>(ck.momentum);
  visit(params, [&](const std::string& n, Tensor<T>& t) { add("params." + n, t.shape, t.data); });
  visit(momentum,
        [&](const std::string& n, Tensor<T>& t) { add("momentum." + n, t.shape, t.data); });
  add("graph", Shape{ck.graph.p, ck.graph.p}, ck.graph.m);

  nlohmann::json header = {
      {"format", 1},
      {"dtype", dtype_name<T>()},
      {"step", ck.step},
      {"seed", ck.seed},
      {"config_hash", ck.config_hash},
      {"graph_built", ck.graph.iteration_built},
      {"tensors", manifest},
  };
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open checkpoint '", path, "' for writing");
  out.write(kCkptMagic, sizeof(kCkptMagic) - 1);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), std::streamsize(hs.size()));
  for (const auto* buf : buffers)
    out.write(reinterpret_cast<const char*>(buf->data()),
              std::streamsize(buf->size() * sizeof(T)));
  out.flush();
  check(out.good(), "short write on checkpoint '", path, "'");
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path, const RunConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint '", path, "'");
  char magic[sizeof(kCkptMagic) - 1];
  in.read(magic, sizeof(magic));
  check(in.gcount() == sizeof(magic) && std::equal(magic, magic + sizeof(magic), kCkptMagic),
        "'", path, "': not a checkpoint file");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  check(in.good() && hlen > 0 && hlen < (1u << 24), "'", path, "': corrupt header length");
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  check(std::uint64_t(in.gcount()) == hlen, "'", path, "': truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const std::exception& e) {
    throw Error(strcat("'", path, "': bad checkpoint header: ", e.what()));
  }
  check(header.value("format", 0) == 1, "'", path, "': unsupported checkpoint format");
  const std::string dtype = header.value("dtype", "");
  check(dtype == dtype_name<T>(), "'", path, "' stores ", dtype, " but this run uses ",
        dtype_name<T>(), "; set precision to match");

  Checkpoint<T> ck;
  ck.step = header.value("step", std::uint64_t(0));
  ck.seed = header.value("seed", std::uint64_t(0));
  ck.config_hash = header.value("config_hash", std::uint64_t(0));
  ck.params = zero_params<T>(cfg);
  ck.momentum = zero_params<T>(cfg);
  ck.graph = TransferGraph<T>::ones(cfg.patch_count());
  ck.graph.iteration_built = header.value("graph_built", std::uint64_t(0));

  // expected manifest, in the same order save used
  std::vector<std::pair<std::string, std::vector<T>*>> expect;
  visit(ck.params,
        [&](const std::string& n, Tensor<T>& t) { expect.emplace_back("params." + n, &t.data); });
  visit(ck.momentum, [&](const std::string& n, Tensor<T>& t) {
    expect.emplace_back("momentum." + n, &t.data);
  });
  expect.emplace_back("graph", &ck.graph.m);

  const auto& manifest = header.at("tensors");
  check(manifest.size() == expect.size(), "'", path, "': checkpoint has ", manifest.size(),
        " tensors, this config wants ", expect.size(),
        " (model dimensions probably differ)");
  for (std::size_t i = 0; i < expect.size(); ++i) {
    const std::string name = manifest[i].value("name", "");
    check(name == expect[i].first, "'", path, "': tensor ", i, " is '", name, "', want '",
          expect[i].first, "'");
    const Shape shape = manifest[i].at("shape").get<Shape>();
    check(shape_numel(shape) == expect[i].second->size(), "'", path, "': tensor '", name,
          "' has shape ", shape_str(shape), ", want ", expect[i].second->size(), " values");
    in.read(reinterpret_cast<char*>(expect[i].second->data()),
            std::streamsize(expect[i].second->size() * sizeof(T)));
    check(std::uint64_t(in.gcount()) == expect[i].second->size() * sizeof(T), "'", path,
          "': truncated buffer '", name, "'");
  }
  return ck;
}

}  // namespace fftat
