/* Copyright 2026 The fsia Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <bit>
#include <cstring>
#include "fsia/json_io.hpp"
#include "fsia/model.hpp"

#include <limits>
#include "fsia/util.hpp"

namespace fsia {

using nlohmann::json;

GradCheckInstance make_gradcheck_instance(std::uint64_t seed) {
  GradCheckInstance g;
  const ModelConfig cfg = ModelConfig::tiny(3);
  g.params = init_params<double>(cfg, seed);
  std::mt19937_64 rng(seed + 100);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (int t = 0; t < 3; ++t) {
    Frame f(cfg.input_side, cfg.input_side);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
    g.frames.push_back(f);
  }
  const int side = cfg.grid_side();
  g.priors = motion_priors(g.frames, side, side);
  const auto fwd = forward_sequence(g.params, g.frames, g.priors);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& st : fwd.cache.steps) {
    for (std::size_t l = 0; l < st.cols.size(); ++l) {
      MatrixX<double> pre = g.params.conv_w[l] * st.cols[l];
      pre.colwise() += g.params.conv_b[l];
      m = std::min(m, pre.cwiseAbs().minCoeff());
    }
  }
  g.min_preactivation = m;
  return g;
}

GradCheckReport finite_diff_check(const ModelParams<double>& params,
                                  const FrameSequence& frames,
                                  const std::vector<PriorMap>& priors,
                                  const Labels& target,
                                  const GradCheckOptions& options) {
  LossAndGrad<double> analytic = loss_and_grad(params, frames, priors, target);
  std::vector<double*> grad_slots = model_detail::flat_slots(analytic.grads);

  ModelParams<double> probe = params;
  std::vector<double*> slots = model_detail::flat_slots(probe);
  auto loss_at = [&] {
    return ctc_loss(forward_sequence(probe, frames, priors).posteriors, target);
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double saved = *slots[k];
    *slots[k] = saved + options.step;
    const double up = loss_at();
    *slots[k] = saved - options.step;
    const double down = loss_at();
    *slots[k] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    double a = *grad_slots[k];
    if (static_cast<long>(k) == options.corrupt_index) a += options.corrupt_delta;
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = k;
    }
    ++report.checked;
  }
  return report;
}

namespace {

constexpr char kMagic[] = "FSIA1";
constexpr std::size_t kMagicLen = 5;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed endianness unsupported");

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

void to_json(json& j, const ConvLayerConfig& c) {
  j = json{{"out_channels", c.out_channels}, {"kernel", c.kernel},
           {"stride", c.stride}, {"padding", c.padding}};
}

void from_json(const json& j, ConvLayerConfig& c) {
  j.at("out_channels").get_to(c.out_channels);
  j.at("kernel").get_to(c.kernel);
  j.at("stride").get_to(c.stride);
  j.at("padding").get_to(c.padding);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"input_side", c.input_side}, {"conv", c.conv},
           {"attention_dim", c.attention_dim}, {"hidden", c.hidden},
           {"alphabet_size", c.alphabet_size}, {"alpha", c.alpha},
           {"dropout", c.dropout}, {"dropout_rate", c.dropout_rate}};
}

void to_json(json& j, const Box& b) { j = json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

void from_json(const json& j, Box& b) {
  if (!j.is_array() || j.size() != 4) throw json::type_error::create(302, "box must be a 4-array", &j);
  b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void from_json(const json& j, ModelConfig& c) {
  j.at("input_side").get_to(c.input_side);
  j.at("conv").get_to(c.conv);
  j.at("attention_dim").get_to(c.attention_dim);
  j.at("hidden").get_to(c.hidden);
  j.at("alphabet_size").get_to(c.alphabet_size);
  j.at("alpha").get_to(c.alpha);
  j.at("dropout").get_to(c.dropout);
  j.at("dropout_rate").get_to(c.dropout_rate);
}

std::string encode_checkpoint(const ModelParams<float>& params) {
  json header;
  header["config"] = params.config;
  header["tensors"] = json::array();
  params.for_each_tensor([&](const std::string& name, const float*, Eigen::Index r, Eigen::Index c) {
    header["tensors"].push_back({{"name", name}, {"rows", r}, {"cols", c}});
  });
  const std::string text = header.dump();
  std::string out(kMagic, kMagicLen);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  params.for_each_tensor([&](const std::string&, const float* d, Eigen::Index r, Eigen::Index c) {
    // Column-major element order, which is Eigen's storage order here.
    for (Eigen::Index i = 0; i < r * c; ++i) put_u32(out, std::bit_cast<std::uint32_t>(d[i]));
  });
  return out;
}

ModelParams<float> decode_checkpoint(const std::string& bytes) {
  auto fail = [](const std::string& m) -> ModelParams<float> {
    throw Error(ErrorCode::kBadCheckpoint, "checkpoint: " + m);
  };
  if (bytes.size() < kMagicLen + 4 || bytes.compare(0, kMagicLen, kMagic) != 0) {
    return fail("missing FSIA1 magic");
  }
  const std::uint32_t len = get_u32(bytes, kMagicLen);
  std::size_t pos = kMagicLen + 4;
  if (bytes.size() < pos + len) return fail("truncated header");
  json header;
  ModelConfig config;
  try {
    header = json::parse(bytes.substr(pos, len));
    config = header.at("config").get<ModelConfig>();
    config.validate();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    return fail(std::string("bad header: ") + e.what());
  }
  pos += len;
  ModelParams<float> params = init_params<float>(config, 0);
  std::size_t index = 0;
  const json& tensors = header.at("tensors");
  params.for_each_tensor([&](const std::string& name, float* d, Eigen::Index r, Eigen::Index c) {
    if (index >= tensors.size() || tensors[index].at("name") != name ||
        tensors[index].at("rows") != r || tensors[index].at("cols") != c) {
      fail("tensor table does not match config at " + name);
    }
    ++index;
    if (bytes.size() < pos + 4 * static_cast<std::size_t>(r * c)) fail("truncated tensor data");
    for (Eigen::Index i = 0; i < r * c; ++i) {
      d[i] = std::bit_cast<float>(get_u32(bytes, pos));
      pos += 4;
    }
  });
  if (index != tensors.size() || pos != bytes.size()) return fail("trailing data");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace fsia
