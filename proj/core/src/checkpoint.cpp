#include "synergy/network.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace synergy {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kFormatTag = "synergy-checkpoint-v1";

ordered_json spec_to_json(const LayerSpec& s) {
  ordered_json j;
  switch (s.kind) {
    case LayerKind::Dense:
      j["kind"] = "dense";
      j["in"] = s.in;
      j["out"] = s.out;
      break;
    case LayerKind::Conv2d:
      j["kind"] = "conv2d";
      j["cin"] = s.cin;
      j["cout"] = s.cout;
      j["k"] = s.k;
      j["stride"] = s.stride;
      j["pad"] = s.pad;
      break;
    case LayerKind::ReLU:
      j["kind"] = "relu";
      break;
    case LayerKind::Flatten:
      j["kind"] = "flatten";
      break;
  }
  return j;
}

LayerSpec spec_from_json(const ordered_json& j, const std::string& path) {
  const std::string kind = j.value("kind", "");
  if (kind == "dense") return LayerSpec::dense(j.at("in").get<int64_t>(), j.at("out").get<int64_t>());
  if (kind == "conv2d")
    return LayerSpec::conv2d(j.at("cin").get<int64_t>(), j.at("cout").get<int64_t>(),
                             j.at("k").get<int64_t>(), j.at("stride").get<int64_t>(),
                             j.at("pad").get<int64_t>());
  if (kind == "relu") return LayerSpec::relu();
  if (kind == "flatten") return LayerSpec::flatten();
  throw FormatError(path + ": unknown layer kind '" + kind + "'");
}

template <typename T>
constexpr const char* scalar_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path,
                     const std::vector<T>* fisher) {
  if (fisher && fisher->size() != net.parameter_count())
    throw ShapeError("save_checkpoint: fisher has " + std::to_string(fisher->size()) +
                     " entries for " + std::to_string(net.parameter_count()) + " parameters");
  ordered_json header;
  header["format"] = kFormatTag;
  header["scalar"] = scalar_name<T>();
  header["param_count"] = net.parameter_count();
  header["has_fisher"] = fisher != nullptr;
  ordered_json layers = ordered_json::array();
  for (const LayerSpec& s : net.specs()) layers.push_back(spec_to_json(s));
  header["layers"] = std::move(layers);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open file for writing");
  out << header.dump() << '\n';
  const std::vector<T> values = net.flat();
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(T)));
  if (fisher)
    out.write(reinterpret_cast<const char*>(fisher->data()),
              static_cast<std::streamsize>(fisher->size() * sizeof(T)));
  if (!out) throw FormatError(path + ": write failed");
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": missing header line");
  ordered_json header;
  try {
    header = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw FormatError(path + ": bad header json: " + e.what());
  }
  if (header.value("format", "") != kFormatTag)
    throw FormatError(path + ": not a " + std::string(kFormatTag) + " file");
  if (header.value("scalar", "") != scalar_name<T>())
    throw FormatError(path + ": scalar type is '" + header.value("scalar", "") + "', expected '" +
                      scalar_name<T>() + "'");

  std::vector<LayerSpec> specs;
  for (const auto& j : header.at("layers")) specs.push_back(spec_from_json(j, path));

  Checkpoint<T> ck;
  ck.network = Network<T>(specs);  // zero-initialized
  const size_t expect = header.at("param_count").get<size_t>();
  if (expect != ck.network.parameter_count())
    throw FormatError(path + ": header claims " + std::to_string(expect) + " parameters, layers have " +
                      std::to_string(ck.network.parameter_count()));

  std::vector<T> values(expect);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(T)));
  if (static_cast<size_t>(in.gcount()) != values.size() * sizeof(T))
    throw FormatError(path + ": truncated parameter block");
  ck.network.set_from_flat(values);

  ck.has_fisher = header.value("has_fisher", false);
  if (ck.has_fisher) {
    ck.fisher.resize(expect);
    in.read(reinterpret_cast<char*>(ck.fisher.data()),
            static_cast<std::streamsize>(ck.fisher.size() * sizeof(T)));
    if (static_cast<size_t>(in.gcount()) != ck.fisher.size() * sizeof(T))
      throw FormatError(path + ": truncated fisher block");
  }
  char extra;
  in.read(&extra, 1);
  if (!in.eof()) throw FormatError(path + ": trailing data");
  return ck;
}

template void save_checkpoint<float>(const Network<float>&, const std::string&,
                                     const std::vector<float>*);
template void save_checkpoint<double>(const Network<double>&, const std::string&,
                                      const std::vector<double>*);
template Checkpoint<float> load_checkpoint<float>(const std::string&);
template Checkpoint<double> load_checkpoint<double>(const std::string&);

}  // namespace synergy
