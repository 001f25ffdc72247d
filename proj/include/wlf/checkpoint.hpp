#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wlf/error.hpp"
#include "wlf/field.hpp"
#include "wlf/pathmodel.hpp"

namespace wlf {

/// Binary container: 8-byte magic, u64 header length, JSON header listing
/// named blocks, then every block as little-endian 64-bit doubles.
struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Eigen::VectorXd>> blocks;

  const Eigen::VectorXd& block(const std::string& name) const {
    for (const auto& [n, v] : blocks)
      if (n == name) return v;
    throw LoadError("container has no block '" + name + "'");
  }
};

namespace detail {

inline constexpr char kMagic[8] = {'W', 'L', 'F', 'C', 'K', 'P', 'T', '1'};

inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = is.get();
    if (c == EOF) throw LoadError("truncated container");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline void write_container(const std::filesystem::path& file, const Container& c) {
  nlohmann::json header = {{"meta", c.meta}, {"blocks", nlohmann::json::array()}};
  for (const auto& [name, v] : c.blocks) header["blocks"].push_back({{"name", name}, {"count", v.size()}});
  const std::string h = header.dump();
  std::ofstream os(file, std::ios::binary);
  if (!os) throw LoadError("cannot write " + file.string());
  os.write(detail::kMagic, sizeof detail::kMagic);
  detail::put_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, v] : c.blocks)
    for (Eigen::Index i = 0; i < v.size(); ++i) detail::put_u64(os, std::bit_cast<std::uint64_t>(v(i)));
}

inline Container read_container(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw LoadError("cannot open " + file.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, detail::kMagic, sizeof magic) != 0) throw LoadError(file.string() + " is not a checkpoint");
  const std::uint64_t len = detail::get_u64(is);
  std::string h(len, '\0');
  is.read(h.data(), static_cast<std::streamsize>(len));
  if (!is) throw LoadError("truncated checkpoint header in " + file.string());
  const auto header = nlohmann::json::parse(h, nullptr, false);
  if (header.is_discarded()) throw LoadError("corrupt checkpoint header in " + file.string());
  Container c;
  c.meta = header.at("meta");
  for (const auto& b : header.at("blocks")) {
    Eigen::VectorXd v(b.at("count").get<Eigen::Index>());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std::bit_cast<double>(detail::get_u64(is));
    c.blocks.emplace_back(b.at("name").get<std::string>(), std::move(v));
  }
  return c;
}

inline nlohmann::json field_spec_to_json(const FieldSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_widths", s.hidden_widths},
          {"activation", std::string(to_string(s.activation))},
          {"use_indicator", s.use_indicator},
          {"time_embedding", s.time_embedding == TimeEmbedding::raw ? "raw" : "sinusoidal"},
          {"frequencies", s.frequencies}};
}

inline FieldSpec field_spec_from_json(const nlohmann::json& j) {
  FieldSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.use_indicator = j.at("use_indicator").get<bool>();
  s.time_embedding = j.at("time_embedding").get<std::string>() == "raw" ? TimeEmbedding::raw : TimeEmbedding::sinusoidal;
  s.frequencies = j.at("frequencies").get<int>();
  return s;
}

inline nlohmann::json path_spec_to_json(const PathSpec& s) {
  return {{"dim", s.dim},
          {"hidden_widths", s.hidden_widths},
          {"activation", std::string(to_string(s.activation))},
          {"use_indicator", s.use_indicator},
          {"indicator_time", s.indicator_time}};
}

inline PathSpec path_spec_from_json(const nlohmann::json& j) {
  PathSpec s;
  s.dim = j.at("dim").get<int>();
  s.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.use_indicator = j.at("use_indicator").get<bool>();
  s.indicator_time = j.at("indicator_time").get<double>();
  return s;
}

struct Checkpoint {
  FieldParams field;
  PathParams path;
  nlohmann::json meta = nlohmann::json::object();
};

inline void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ck) {
  Container c;
  c.meta = ck.meta;
  c.meta["field_spec"] = field_spec_to_json(ck.field.spec);
  c.meta["path_spec"] = path_spec_to_json(ck.path.spec);
  c.blocks = {{"theta", ck.field.theta}, {"eta", ck.path.eta}};
  write_container(file, c);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& file) {
  const Container c = read_container(file);
  Checkpoint ck;
  try {
    ck.field.spec = field_spec_from_json(c.meta.at("field_spec"));
    ck.path.spec = path_spec_from_json(c.meta.at("path_spec"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + file.string() + " has a malformed spec: " + e.what());
  }
  ck.field.theta = c.block("theta");
  ck.path.eta = c.block("eta");
  if (ck.field.theta.size() != ck.field.spec.layout().parameter_count() ||
      ck.path.eta.size() != ck.path.spec.layout().parameter_count())
    throw LoadError("checkpoint " + file.string() + " parameter counts do not match its specs");
  ck.meta = c.meta;
  return ck;
}

}  // namespace wlf
