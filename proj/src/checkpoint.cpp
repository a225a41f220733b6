// Copyright 2026 The SupReMix Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "supremix/checkpoint.hpp"

#include <fstream>

namespace supremix {

namespace {

using json = nlohmann::ordered_json;

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return data;
}

Matrix matrix_from_json(const json& data, Index rows, Index cols, const std::string& what) {
  if (!data.is_array() || static_cast<Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint: " + what + " has the wrong number of entries");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<size_t>(r * cols + c)].get<double>();
  return m;
}

}  // namespace

json checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format"] = "supremix-checkpoint";
  j["version"] = kCheckpointVersion;
  j["method"] = ckpt.method;
  j["encoder"] = {{"input_dim", ckpt.encoder.input_dim},
                  {"hidden_dims", ckpt.encoder.hidden_dims},
                  {"embed_dim", ckpt.encoder.embed_dim}};
  j["label_range"] = {{"min", ckpt.range.min}, {"max", ckpt.range.max}};
  j["config"] = ckpt.config;
  json layers = json::array();
  for (size_t l = 0; l < ckpt.params.num_layers(); ++l) {
    const Matrix& w = ckpt.params.weights[l];
    layers.push_back({{"rows", w.rows()},
                      {"cols", w.cols()},
                      {"weight", matrix_to_json(w)},
                      {"bias", matrix_to_json(ckpt.params.biases[l])}});
  }
  j["layers"] = std::move(layers);
  if (ckpt.head) {
    j["head"] = {{"weight", matrix_to_json(ckpt.head->weight.transpose())},
                 {"bias", ckpt.head->bias}};
  } else {
    j["head"] = nullptr;
  }
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", "") != "supremix-checkpoint") {
      throw ParseError("checkpoint: not a supremix checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError("checkpoint: unsupported format version " +
                       std::to_string(j.at("version").get<int>()));
    }
    Checkpoint ckpt;
    ckpt.method = j.at("method").get<std::string>();
    const auto& enc = j.at("encoder");
    ckpt.encoder.input_dim = enc.at("input_dim").get<Index>();
    ckpt.encoder.hidden_dims = enc.at("hidden_dims").get<std::vector<Index>>();
    ckpt.encoder.embed_dim = enc.at("embed_dim").get<Index>();
    ckpt.encoder.validate();
    ckpt.range = LabelRange::make(j.at("label_range").at("min").get<double>(),
                                  j.at("label_range").at("max").get<double>());
    ckpt.config = j.at("config");

    std::vector<Index> dims{ckpt.encoder.input_dim};
    dims.insert(dims.end(), ckpt.encoder.hidden_dims.begin(), ckpt.encoder.hidden_dims.end());
    dims.push_back(ckpt.encoder.embed_dim);
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != dims.size()) {
      throw ParseError("checkpoint: layer count does not match the encoder shape");
    }
    for (size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      const Index rows = layer.at("rows").get<Index>(), cols = layer.at("cols").get<Index>();
      if (rows != dims[l] || cols != dims[l + 1]) {
        throw ParseError("checkpoint: layer " + std::to_string(l) + " shape mismatch");
      }
      const std::string name = "layer " + std::to_string(l);
      ckpt.params.weights.push_back(matrix_from_json(layer.at("weight"), rows, cols, name));
      ckpt.params.biases.push_back(matrix_from_json(layer.at("bias"), 1, cols, name + " bias"));
    }
    if (!j.at("head").is_null()) {
      ProbeParams head;
      head.weight = matrix_from_json(j["head"].at("weight"), 1, ckpt.encoder.embed_dim, "head")
                        .transpose();
      head.bias = j["head"].at("bias").get<double>();
      ckpt.head = std::move(head);
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const DegenerateRange& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace supremix
