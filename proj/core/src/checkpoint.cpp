// Copyright 2026 The SimulMask Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "simulmask/model.hpp"

namespace simulmask {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "simulmask-checkpoint";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

json config_to_json(const ModelConfig& c) {
  return json{{"n_layers", c.n_layers}, {"n_heads", c.n_heads}, {"d_model", c.d_model},
              {"d_ff", c.d_ff},         {"vocab_size", c.vocab_size}, {"seed", c.seed}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  json header;
  header["format"] = kFormat;
  header["version"] = 1;
  header["config"] = config_to_json(params.config);
  json tensors = json::array();
  std::size_t offset = 0;
  params.for_each_tensor([&](const std::string& name, const Matrix& m) {
    tensors.push_back(
        json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += m.size();
  });
  header["tensors"] = std::move(tensors);
  header["total_values"] = offset;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  params.for_each_tensor([&](const std::string&, const Matrix& m) {
    for (float v : m.values()) {
      const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  });
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kData,
          "checkpoint has no header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, std::string("checkpoint header is not JSON: ") + e.what());
  }
  require(header.value("format", "") == kFormat, ErrorKind::kData,
          "not a simulmask checkpoint: " + path.string());

  ModelConfig config;
  try {
    const json& c = header.at("config");
    config.n_layers = c.at("n_layers").get<std::size_t>();
    config.n_heads = c.at("n_heads").get<std::size_t>();
    config.d_model = c.at("d_model").get<std::size_t>();
    config.d_ff = c.at("d_ff").get<std::size_t>();
    config.vocab_size = c.at("vocab_size").get<std::size_t>();
    config.seed = c.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, std::string("checkpoint config incomplete: ") + e.what());
  }
  ModelParams params = ModelParams::zeros(config);

  const auto total = header.at("total_values").get<std::size_t>();
  require(total == params.parameter_count(), ErrorKind::kData,
          "checkpoint value count does not match its config");
  std::vector<std::uint32_t> raw(total);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(total * sizeof(std::uint32_t)));
  require(in.gcount() == static_cast<std::streamsize>(total * sizeof(std::uint32_t)),
          ErrorKind::kData, "checkpoint is truncated");

  const json& tensors = header.at("tensors");
  std::size_t index = 0;
  params.for_each_tensor([&](const std::string& name, Matrix& m) {
    require(index < tensors.size(), ErrorKind::kData, "checkpoint lists too few tensors");
    const json& t = tensors[index++];
    require(t.at("name").get<std::string>() == name &&
                t.at("rows").get<std::size_t>() == m.rows() &&
                t.at("cols").get<std::size_t>() == m.cols(),
            ErrorKind::kData, "checkpoint tensor " + name + " does not match config");
    const auto offset = t.at("offset").get<std::size_t>();
    require(offset + m.size() <= total, ErrorKind::kData, "checkpoint offset out of range");
    for (std::size_t i = 0; i < m.size(); ++i) {
      m.values()[i] = std::bit_cast<float>(to_little_endian(raw[offset + i]));
    }
  });
  return params;
}

}  // namespace simulmask
