#include "hemomesh/unet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hemomesh {

namespace {
constexpr double kNominalDegree = 6.0;  // init-time estimate of |N(p)|
}

std::string to_string(ConvVariant v) {
  switch (v) {
    case ConvVariant::isotropic: return "sage";
    case ConvVariant::attention: return "feast";
    case ConvVariant::gem: return "gem";
  }
  return "?";
}

ConvVariant variant_from_string(const std::string& s) {
  if (s == "sage" || s == "isotropic") return ConvVariant::isotropic;
  if (s == "feast" || s == "attention") return ConvVariant::attention;
  if (s == "gem") return ConvVariant::gem;
  throw ConfigError("unknown architecture variant: " + s);
}

UNetConfig UNetConfig::defaults(ConvVariant variant) {
  UNetConfig cfg;
  cfg.variant = variant;
  cfg.output_mode = variant == ConvVariant::gem ? OutputMode::tangential
                                                : OutputMode::euclidean3;
  return cfg;
}

RepType UNetModel::out_rep() const {
  if (cfg_.output_mode == OutputMode::tangential_normal)
    return RepType{{{0, 1}, {1, 1}}};
  return RepType{{{1, 1}}};
}

int UNetModel::input_dim() const {
  return 27 + (cfg_.recipe.include_inlet_distance ? 1 : 0);
}

int UNetModel::add_param(const std::string& name, int rows, int cols,
                         double std) {
  shapes_.push_back({name, rows, cols, std});
  parameter_count_ += static_cast<std::int64_t>(rows) * cols;
  return static_cast<int>(shapes_.size()) - 1;
}

int UNetModel::add_pointwise(const std::string& name, int level, int cin,
                             int cout, const RepType& rin, const RepType& rout,
                             LayerSpec::Kind kind) {
  LayerSpec spec;
  spec.kind = kind;
  spec.level = level;
  spec.cin = cin;
  spec.cout = cout;
  spec.name = name;
  if (gem()) {
    spec.rin = rin;
    spec.rout = rout;
    const LayerBasis basis =
        assemble_layer_basis(rin, rout, cfg_.frequency_cap);
    spec.layout = gem_coeff_layout(rin, rout, basis);
    spec.p_k1 = add_param(name + ".k1",
                          static_cast<int>(spec.layout.self_count), 1,
                          std::sqrt(1.0 / std::max(1, rin.dim())));
  } else {
    spec.p_k1 =
        add_param(name + ".w", cin, cout, std::sqrt(1.0 / std::max(1, cin)));
  }
  layers_.push_back(std::move(spec));
  return static_cast<int>(layers_.size()) - 1;
}

int UNetModel::add_conv(const std::string& name, int level, int cin, int cout,
                        const RepType& rin, const RepType& rout) {
  LayerSpec spec;
  spec.kind = LayerSpec::Kind::conv;
  spec.level = level;
  spec.cin = cin;
  spec.cout = cout;
  spec.name = name;
  if (gem()) {
    spec.rin = rin;
    spec.rout = rout;
    const LayerBasis basis =
        assemble_layer_basis(rin, rout, cfg_.frequency_cap);
    spec.layout = gem_coeff_layout(rin, rout, basis);
    const double fan = std::max(1, rin.dim());
    spec.p_k1 = add_param(name + ".k1",
                          static_cast<int>(spec.layout.self_count), 1,
                          std::sqrt(0.5 / fan));
    spec.p_k2 = add_param(name + ".k2",
                          static_cast<int>(spec.layout.neighbor_count), 1,
                          std::sqrt(0.5 / (fan * kNominalDegree)));
  } else {
    const double std = std::sqrt(0.5 / std::max(1, cin));
    spec.p_k1 = add_param(name + ".k1", cin, cout, std);
    spec.p_k2 = add_param(name + ".k2", cin, cout, std);
    if (cfg_.variant == ConvVariant::attention)
      spec.p_w = add_param(name + ".att", cin, 1, 0.0);  // uniform start
  }
  layers_.push_back(std::move(spec));
  return static_cast<int>(layers_.size()) - 1;
}

void UNetModel::residual_block(const std::string& name, int level, int scale,
                               int cin, const RepType& rin) {
  const int c = cfg_.widths[scale];
  const RepType rc = scale_rep(scale);
  program_.push_back({Step::Op::save, -1, {}});
  const int conv1 = add_conv(name + ".conv1", level, cin, c, rin, rc);
  program_.push_back({Step::Op::layer, conv1, {}});
  program_.push_back({Step::Op::nonlin, -1, rc});
  const int conv2 = add_conv(name + ".conv2", level, c, c, rc, rc);
  program_.push_back({Step::Op::layer, conv2, {}});
  int proj = -1;
  const bool same = gem() ? (rin == rc) : (cin == c);
  if (!same)
    proj = add_pointwise(name + ".proj", level, cin, c, rin, rc,
                         LayerSpec::Kind::proj);
  program_.push_back({Step::Op::skip_add, proj, {}});
  program_.push_back({Step::Op::nonlin, -1, rc});
}

void UNetModel::build() {
  rep_in_ = input_rep_layout(cfg_.recipe.include_inlet_distance);
  const RepType rep1 = scale_rep(0), rep2 = scale_rep(1), rep3 = scale_rep(2);
  const int c1 = cfg_.widths[0], c2 = cfg_.widths[1], c3 = cfg_.widths[2];
  const int cin = gem() ? rep_in_.dim() : input_dim();

  // Stem: pointwise lift at full resolution.
  const int stem = add_pointwise("stem", 0, cin, c1, rep_in_, rep1,
                                 LayerSpec::Kind::linear);
  program_.push_back({Step::Op::layer, stem, {}});
  program_.push_back({Step::Op::pool, 0, rep1});

  // Encoder scale 1 (level 1).
  for (int b = 0; b < cfg_.blocks[0]; ++b)
    residual_block("enc1.b" + std::to_string(b), 1, 0, c1, rep1);
  program_.push_back({Step::Op::enc_save, -1, {}});
  program_.push_back({Step::Op::pool, 1, rep1});

  // Encoder scale 2 (level 2).
  for (int b = 0; b < cfg_.blocks[1]; ++b)
    residual_block("enc2.b" + std::to_string(b), 2, 1, b == 0 ? c1 : c2,
                   b == 0 ? rep1 : rep2);
  program_.push_back({Step::Op::enc_save, -1, {}});
  program_.push_back({Step::Op::pool, 2, rep2});

  // Bottleneck scale 3 (level 3).
  for (int b = 0; b < cfg_.blocks[2]; ++b)
    residual_block("enc3.b" + std::to_string(b), 3, 2, b == 0 ? c2 : c3,
                   b == 0 ? rep2 : rep3);

  // Decoder scale 2.
  program_.push_back({Step::Op::unpool, 2, rep3});
  program_.push_back({Step::Op::concat_enc, 1, {}});
  const RepType cat2 = RepType::concat(rep3, rep2);
  for (int b = 0; b < cfg_.decoder_blocks[1]; ++b)
    residual_block("dec2.b" + std::to_string(b), 2, 1, b == 0 ? c3 + c2 : c2,
                   b == 0 ? cat2 : rep2);

  // Decoder scale 1.
  program_.push_back({Step::Op::unpool, 1, rep2});
  program_.push_back({Step::Op::concat_enc, 0, {}});
  const RepType cat1 = RepType::concat(rep2, rep1);
  for (int b = 0; b < cfg_.decoder_blocks[0]; ++b)
    residual_block("dec1.b" + std::to_string(b), 1, 0, b == 0 ? c2 + c1 : c1,
                   b == 0 ? cat1 : rep1);

  // Back to full resolution, pointwise head.
  program_.push_back({Step::Op::unpool, 0, rep1});
  const RepType orep = out_rep();
  const int head = add_pointwise("head", 0, c1, 3, rep1, orep,
                                 LayerSpec::Kind::linear);
  program_.push_back({Step::Op::layer, head, {}});
  if (gem()) program_.push_back({Step::Op::project, -1, {}});
}

UNetModel::UNetModel(const UNetConfig& cfg) : cfg_(cfg) {
  if (cfg_.relu_samples < 2 * 2 + 1)
    throw ConfigError("relu_samples must be >= 2*max_frequency + 1 = 5");
  if (cfg_.variant != ConvVariant::gem &&
      cfg_.output_mode != OutputMode::euclidean3)
    throw ConfigError(
        "tangential output modes require the gem variant; sage/feast predict "
        "unconstrained 3-vectors");
  if (cfg_.variant == ConvVariant::gem &&
      cfg_.output_mode == OutputMode::euclidean3)
    throw ConfigError("gem predicts in tangential modes, not euclidean3");
  build();
}

// --- config (de)serialization -------------------------------------------

std::string config_json(const UNetConfig& cfg) {
  nlohmann::json j;
  j["variant"] = to_string(cfg.variant);
  j["widths"] = cfg.widths;
  j["gem_mults"] = cfg.gem_mults;
  j["blocks"] = cfg.blocks;
  j["decoder_blocks"] = cfg.decoder_blocks;
  j["frequency_cap"] = cfg.frequency_cap;
  j["relu_samples"] = cfg.relu_samples;
  j["output_mode"] = cfg.output_mode == OutputMode::tangential ? "tangential"
                     : cfg.output_mode == OutputMode::tangential_normal
                         ? "tangential_normal"
                         : "euclidean3";
  j["pool_ratios"] = cfg.pool_ratios;
  j["recipe"] = {{"ball_radius", cfg.recipe.ball_radius},
                 {"include_inlet_distance", cfg.recipe.include_inlet_distance},
                 {"form", cfg.recipe.form == FeatureForm::irreps ? "irreps"
                                                                 : "flattened"}};
  return j.dump(2);
}

UNetConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad config JSON: ") + e.what());
  }
  UNetConfig cfg;
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  auto arr3 = [&](const char* key, auto& out) {
    const auto a = j.at(key);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i);
  };
  arr3("widths", cfg.widths);
  arr3("gem_mults", cfg.gem_mults);
  arr3("blocks", cfg.blocks);
  arr3("decoder_blocks", cfg.decoder_blocks);
  cfg.frequency_cap = j.at("frequency_cap").get<int>();
  cfg.relu_samples = j.at("relu_samples").get<int>();
  const std::string om = j.at("output_mode").get<std::string>();
  cfg.output_mode = om == "tangential" ? OutputMode::tangential
                    : om == "tangential_normal" ? OutputMode::tangential_normal
                                                : OutputMode::euclidean3;
  arr3("pool_ratios", cfg.pool_ratios);
  const auto& r = j.at("recipe");
  cfg.recipe.ball_radius = r.at("ball_radius").get<double>();
  cfg.recipe.include_inlet_distance =
      r.at("include_inlet_distance").get<bool>();
  cfg.recipe.form = r.at("form").get<std::string>() == "irreps"
                        ? FeatureForm::irreps
                        : FeatureForm::flattened;
  return cfg;
}

// --- checkpoint I/O -------------------------------------------------------

namespace {
constexpr char kCkptMagic[8] = {'H', 'M', 'W', 'S', 'S', 'C', 'P', '1'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename V>
void put_le(std::ofstream& out, V v) {
  unsigned char buf[sizeof(V)];
  for (std::size_t i = 0; i < sizeof(V); ++i)
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(V));
}

template <typename V>
V get_le(std::ifstream& in) {
  unsigned char buf[sizeof(V)];
  in.read(reinterpret_cast<char*>(buf), sizeof(V));
  if (!in) throw IoError("checkpoint: unexpected end of file");
  V v = 0;
  for (std::size_t i = 0; i < sizeof(V); ++i)
    v |= static_cast<V>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(config_json(ckpt.config));
  j["init_seed"] = ckpt.init_seed;
  j["hierarchy_seed"] = ckpt.hierarchy_seed;
  j["config_hash"] = ckpt.config_hash;
  j["block_names"] = ckpt.params.names;
  const std::string header = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCkptMagic, sizeof(kCkptMagic));
  put_le<std::uint32_t>(out, kCkptVersion);
  put_le<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const VecX<float> flat = ckpt.params.flatten();
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(flat.size()));
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(float)));
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw IoError("checkpoint: bad magic (not a checkpoint file): " + path);
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCkptVersion)
    throw IoError("checkpoint: unsupported format version " +
                  std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(in);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("checkpoint: truncated header");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.config = config_from_json(j.at("config").dump());
  ckpt.init_seed = j.at("init_seed").get<std::uint64_t>();
  ckpt.hierarchy_seed = j.at("hierarchy_seed").get<std::uint64_t>();
  ckpt.config_hash = j.at("config_hash").get<std::string>();

  const auto count = get_le<std::uint64_t>(in);
  VecX<float> flat(static_cast<Eigen::Index>(count));
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw IoError("checkpoint: truncated parameter vector");

  // Rebuild block structure from the model shapes.
  UNetModel model(ckpt.config);
  ckpt.params = model.init_params<float>(0);
  if (model.parameter_count() != static_cast<std::int64_t>(count))
    throw IoError("checkpoint: parameter count does not match config");
  ckpt.params.unflatten(flat);
  ckpt.params.names = j.at("block_names").get<std::vector<std::string>>();
  return ckpt;
}

}  // namespace hemomesh
