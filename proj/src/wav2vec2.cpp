#include "braintalker/wav2vec2.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace bt {

namespace {

using nlohmann::json;

Matrix conv1d_valid(const Matrix& x, const Matrix& w, int kernel, int stride) {
  const Index c_in = x.cols();
  const Index t_out = (x.rows() - kernel) / stride + 1;
  Matrix y = Matrix::Zero(t_out, w.rows());
  for (int k = 0; k < kernel; ++k) {
    const Matrix xk = x(Eigen::seqN(k, t_out, stride), Eigen::all);
    y.noalias() += xk * w.middleCols(Index(k) * c_in, c_in).transpose();
  }
  return y;
}

// Per-channel normalization over the time axis (biased variance), affine.
void group_norm_time(Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
  for (Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    x.col(c) = ((x.col(c).array() - mean) / std::sqrt(var + eps)) * gamma(0, c) + beta(0, c);
  }
}

void layer_norm_rows(Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
  const Index d = x.cols();
  for (Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / double(d);
    x.row(r) = (((x.row(r).array() - mean) / std::sqrt(var + eps)) * gamma.row(0).array() +
                beta.row(0).array())
                   .matrix();
  }
}

void gelu_inplace(Matrix& x) {
  x = x.unaryExpr([](double e) { return 0.5 * e * (1.0 + std::erf(e * M_SQRT1_2)); });
}

Matrix linear_of(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

Matrix softmax_rows_of(Matrix x) {
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    x.row(r) = (e / e.sum()).matrix();
  }
  return x;
}

}  // namespace

Wav2Vec2Model::Wav2Vec2Model(Wav2Vec2Config cfg, nn::ParamStore params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {}

std::vector<std::tuple<std::string, Index, Index>> Wav2Vec2Model::expected_layout(
    const Wav2Vec2Config& cfg) {
  std::vector<std::tuple<std::string, Index, Index>> out;
  Index c_in = 1;
  for (std::size_t i = 0; i < cfg.conv_layers.size(); ++i) {
    out.emplace_back("frontend.conv" + std::to_string(i) + ".w", cfg.conv_dim,
                     Index(cfg.conv_layers[i].first) * c_in);
    if (i == 0) {
      out.emplace_back("frontend.norm0.gamma", 1, cfg.conv_dim);
      out.emplace_back("frontend.norm0.beta", 1, cfg.conv_dim);
    }
    c_in = cfg.conv_dim;
  }
  out.emplace_back("proj.ln.gamma", 1, cfg.conv_dim);
  out.emplace_back("proj.ln.beta", 1, cfg.conv_dim);
  out.emplace_back("proj.w", cfg.dim, cfg.conv_dim);
  out.emplace_back("proj.b", 1, cfg.dim);
  out.emplace_back("pos_conv.w", cfg.dim, Index(cfg.pos_kernel) * (cfg.dim / cfg.pos_groups));
  out.emplace_back("pos_conv.b", 1, cfg.dim);
  out.emplace_back("enc.ln.gamma", 1, cfg.dim);
  out.emplace_back("enc.ln.beta", 1, cfg.dim);
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    for (const char* proj : {"q", "k", "v", "out"}) {
      out.emplace_back(p + "attn." + proj + ".w", cfg.dim, cfg.dim);
      out.emplace_back(p + "attn." + proj + ".b", 1, cfg.dim);
    }
    out.emplace_back(p + "ln1.gamma", 1, cfg.dim);
    out.emplace_back(p + "ln1.beta", 1, cfg.dim);
    out.emplace_back(p + "ffn1.w", cfg.ffn_dim, cfg.dim);
    out.emplace_back(p + "ffn1.b", 1, cfg.ffn_dim);
    out.emplace_back(p + "ffn2.w", cfg.dim, cfg.ffn_dim);
    out.emplace_back(p + "ffn2.b", 1, cfg.dim);
    out.emplace_back(p + "ln2.gamma", 1, cfg.dim);
    out.emplace_back(p + "ln2.beta", 1, cfg.dim);
  }
  return out;
}

Wav2Vec2Model Wav2Vec2Model::load(const std::string& dir) {
  const std::string index_path = dir + "/wav2vec2.json";
  std::ifstream index_file(index_path);
  require(index_file.good(), "cannot open pretrained weight index " + index_path);
  json idx;
  try {
    index_file >> idx;
  } catch (const std::exception& e) {
    fail("bad JSON in " + index_path + ": " + e.what());
  }
  require(idx.value("format", "") == "braintalker-w2v2-v1",
          "unsupported weight format in " + index_path);

  Wav2Vec2Config cfg;
  const json& jc = idx.at("config");
  cfg.conv_dim = jc.at("conv_dim").get<int>();
  cfg.dim = jc.at("dim").get<int>();
  cfg.blocks = jc.at("blocks").get<int>();
  cfg.heads = jc.at("heads").get<int>();
  cfg.ffn_dim = jc.at("ffn_dim").get<int>();
  cfg.pos_kernel = jc.at("pos_kernel").get<int>();
  cfg.pos_groups = jc.at("pos_groups").get<int>();
  cfg.conv_layers.clear();
  for (const json& layer : jc.at("conv_layers"))
    cfg.conv_layers.emplace_back(layer.at(0).get<int>(), layer.at(1).get<int>());
  require(cfg.dim % cfg.heads == 0, "pretrained config: dim not divisible by heads");
  require(cfg.dim % cfg.pos_groups == 0, "pretrained config: dim not divisible by pos_groups");

  const auto layout = expected_layout(cfg);
  const json& tensors = idx.at("tensors");
  require(tensors.size() == layout.size(),
          "weight index lists " + std::to_string(tensors.size()) + " tensors, expected " +
              std::to_string(layout.size()));

  const std::string bin_path = dir + "/wav2vec2.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  require(bin.good(), "cannot open pretrained weight blob " + bin_path);

  nn::ParamStore params;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, rows, cols] = layout[i];
    const json& t = tensors[i];
    require(t.at("name").get<std::string>() == name && t.at("rows").get<Index>() == rows &&
                t.at("cols").get<Index>() == cols,
            "weight index entry " + std::to_string(i) + " does not match expected tensor '" +
                name + "' (" + std::to_string(rows) + "x" + std::to_string(cols) + ")");
    Matrix& m = params.create(name, rows, cols);
    std::vector<float> buf(std::size_t(rows * cols));
    bin.read(reinterpret_cast<char*>(buf.data()),
             std::streamsize(buf.size() * sizeof(float)));
    require(bin.gcount() == std::streamsize(buf.size() * sizeof(float)),
            "weight blob truncated while reading tensor '" + name + "'");
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = double(buf[std::size_t(r * cols + c)]);
    require(m.allFinite(), "tensor '" + name + "' contains non-finite values");
  }
  bin.peek();
  require(bin.eof(), "weight blob has trailing bytes beyond the indexed tensors");
  return Wav2Vec2Model(std::move(cfg), std::move(params));
}

Index Wav2Vec2Model::frame_count(Index samples) const {
  Index len = samples;
  for (const auto& [kernel, stride] : cfg_.conv_layers) {
    if (len < kernel) return 0;
    len = (len - kernel) / stride + 1;
  }
  return len;
}

Matrix Wav2Vec2Model::forward(const Vector& wave) const {
  require(wave.allFinite(), "wave contains non-finite values");
  require(frame_count(wave.size()) >= 1,
          "wave too short for one output frame: " + std::to_string(wave.size()) + " samples");

  // Strided frontend: conv (no bias) + GELU, channel-wise norm after conv 0.
  Matrix h = wave;
  for (std::size_t i = 0; i < cfg_.conv_layers.size(); ++i) {
    const auto [kernel, stride] = cfg_.conv_layers[i];
    h = conv1d_valid(h, params_.at("frontend.conv" + std::to_string(i) + ".w"), kernel, stride);
    if (i == 0)
      group_norm_time(h, params_.at("frontend.norm0.gamma"), params_.at("frontend.norm0.beta"),
                      1e-5);
    gelu_inplace(h);
  }

  layer_norm_rows(h, params_.at("proj.ln.gamma"), params_.at("proj.ln.beta"), 1e-5);
  h = linear_of(h, params_.at("proj.w"), params_.at("proj.b"));

  // Convolutional position embedding: grouped same-conv over frames, one
  // trailing frame dropped for even kernels, GELU, residual add.
  {
    const Index frames = h.rows();
    const int pad = cfg_.pos_kernel / 2;
    Matrix padded = Matrix::Zero(frames + 2 * pad, cfg_.dim);
    padded.middleRows(pad, frames) = h;
    const Index group_width = cfg_.dim / cfg_.pos_groups;
    const Index t_out = padded.rows() - cfg_.pos_kernel + 1;
    Matrix pos = Matrix::Zero(t_out, cfg_.dim);
    const Matrix& w = params_.at("pos_conv.w");
    for (int g = 0; g < cfg_.pos_groups; ++g) {
      const Matrix xg = padded.middleCols(Index(g) * group_width, group_width);
      const auto wg = w.middleRows(Index(g) * group_width, group_width);
      pos.middleCols(Index(g) * group_width, group_width) =
          conv1d_valid(xg, wg, cfg_.pos_kernel, 1);
    }
    pos.rowwise() += params_.at("pos_conv.b").row(0);
    if (cfg_.pos_kernel % 2 == 0) pos.conservativeResize(pos.rows() - 1, Eigen::NoChange);
    require(pos.rows() == frames, "position embedding length mismatch");
    gelu_inplace(pos);
    h += pos;
  }
  layer_norm_rows(h, params_.at("enc.ln.gamma"), params_.at("enc.ln.beta"), 1e-5);

  // Post-norm transformer stack.
  const Index head_dim = cfg_.dim / cfg_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(double(head_dim));
  for (int i = 0; i < cfg_.blocks; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    Matrix q = linear_of(h, params_.at(p + "attn.q.w"), params_.at(p + "attn.q.b"));
    Matrix k = linear_of(h, params_.at(p + "attn.k.w"), params_.at(p + "attn.k.b"));
    Matrix v = linear_of(h, params_.at(p + "attn.v.w"), params_.at(p + "attn.v.b"));
    Matrix merged(h.rows(), cfg_.dim);
    for (int hd = 0; hd < cfg_.heads; ++hd) {
      const Index start = Index(hd) * head_dim;
      const Matrix scores =
          softmax_rows_of(q.middleCols(start, head_dim) *
                          k.middleCols(start, head_dim).transpose() * inv_sqrt);
      merged.middleCols(start, head_dim) = scores * v.middleCols(start, head_dim);
    }
    h += linear_of(merged, params_.at(p + "attn.out.w"), params_.at(p + "attn.out.b"));
    layer_norm_rows(h, params_.at(p + "ln1.gamma"), params_.at(p + "ln1.beta"), 1e-5);
    Matrix ffn = linear_of(h, params_.at(p + "ffn1.w"), params_.at(p + "ffn1.b"));
    gelu_inplace(ffn);
    h += linear_of(ffn, params_.at(p + "ffn2.w"), params_.at(p + "ffn2.b"));
    layer_norm_rows(h, params_.at(p + "ln2.gamma"), params_.at(p + "ln2.beta"), 1e-5);
  }
  return h;
}

}  // namespace bt
