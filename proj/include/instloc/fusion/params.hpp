#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "instloc/common.hpp"

namespace instloc::fusion
{
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct AttentionConfig
{
  int heads = 4;
  int points = 4;  // K
  int dim = 16;    // E

  int HeadDim() const { return dim / heads; }

  void Validate() const
  {
    if (heads < 1 || points < 1 || dim < 1 || dim % heads != 0)
    {
      throw ConfigError("attention: need heads >= 1, K >= 1 and E divisible by heads (heads " +
                        std::to_string(heads) + ", K " + std::to_string(points) + ", E " + std::to_string(dim) + ")");
    }
  }
};

/// Model shape. Inputs are square image x image RGB-D patches cut into
/// patch x patch tiles, giving an H = W = image / patch feature grid.
struct FusionConfig
{
  int image = 16;
  int patch = 2;
  int embed = 16;
  int heads = 4;
  int points = 4;
  int weight_hidden = 8;
  int classes = 8;

  int Grid() const { return image / patch; }
  int Positions() const { return Grid() * Grid(); }
  AttentionConfig Attention() const { return {heads, points, embed}; }

  void Validate() const
  {
    Attention().Validate();
    if (patch < 1 || image < patch || image % patch != 0)
    {
      throw ConfigError("fusion: image size must be a positive multiple of the patch size");
    }
    if (weight_hidden < 1 || classes < 1)
    {
      throw ConfigError("fusion: weighting width and class count must be positive");
    }
  }

  nlohmann::json ToJson() const
  {
    return {{"image", image},   {"patch", patch},
            {"embed", embed},   {"heads", heads},
            {"points", points}, {"weight_hidden", weight_hidden},
            {"classes", classes}};
  }

  static FusionConfig FromJson(const nlohmann::json& j)
  {
    FusionConfig c;
    try
    {
      c.image = j.at("image");
      c.patch = j.at("patch");
      c.embed = j.at("embed");
      c.heads = j.at("heads");
      c.points = j.at("points");
      c.weight_hidden = j.at("weight_hidden");
      c.classes = j.at("classes");
    }
    catch (const nlohmann::json::exception& e)
    {
      throw ConfigError(std::string("fusion config: ") + e.what());
    }
    c.Validate();
    return c;
  }
};

/// y = x W^T + b over rows of x.
template <typename T>
struct Linear
{
  Mat<T> weight;  // out x in
  Mat<T> bias;    // 1 x out

  Linear() = default;
  Linear(int out, int in) : weight(Mat<T>::Zero(out, in)), bias(Mat<T>::Zero(1, out)) {}

  Mat<T> Forward(const Mat<T>& x) const
  {
    Mat<T> y = x * weight.transpose();
    y.rowwise() += bias.row(0);
    return y;
  }

  /// Accumulates parameter gradients into grad and returns dL/dx.
  Mat<T> Backward(const Mat<T>& x, const Mat<T>& dy, Linear& grad) const
  {
    grad.weight.noalias() += dy.transpose() * x;
    grad.bias.row(0) += dy.colwise().sum();
    return dy * weight;
  }
};

template <typename T>
struct AttentionParams
{
  Linear<T> offsets;  // E -> heads * K * 2, (x, y) per point
  Linear<T> logits;   // E -> heads * K
  Linear<T> output;   // E -> E

  static AttentionParams Zeros(const AttentionConfig& c)
  {
    return {Linear<T>(c.heads * c.points * 2, c.dim), Linear<T>(c.heads * c.points, c.dim), Linear<T>(c.dim, c.dim)};
  }
};

template <typename T>
struct FusionParams
{
  FusionConfig config;
  Linear<T> encoder_rgb;    // patch^2 * 3 -> E
  Linear<T> encoder_depth;  // patch^2 -> E
  Linear<T> query_rgb;
  Linear<T> value_rgb;
  Linear<T> query_depth;
  Linear<T> value_depth;
  AttentionParams<T> r2r;
  AttentionParams<T> d2r;
  AttentionParams<T> d2d;
  AttentionParams<T> r2d;
  Linear<T> weight_conv3;  // 3x3 conv as hidden x (9 * 2E)
  Linear<T> weight_conv1;  // 1x1 conv, hidden -> 1
  Linear<T> classifier;    // E -> classes

  static FusionParams Zeros(const FusionConfig& c)
  {
    c.Validate();
    FusionParams p;
    p.config = c;
    const int e = c.embed;
    p.encoder_rgb = Linear<T>(e, c.patch * c.patch * 3);
    p.encoder_depth = Linear<T>(e, c.patch * c.patch);
    p.query_rgb = p.value_rgb = p.query_depth = p.value_depth = Linear<T>(e, e);
    p.r2r = p.d2r = p.d2d = p.r2d = AttentionParams<T>::Zeros(c.Attention());
    p.weight_conv3 = Linear<T>(c.weight_hidden, 9 * 2 * e);
    p.weight_conv1 = Linear<T>(1, c.weight_hidden);
    p.classifier = Linear<T>(c.classes, e);
    return p;
  }

  /// Calls f(group, name, tensor) for every tensor in a fixed order.
  template <typename F>
  void Visit(F&& f)
  {
    VisitImpl(*this, f);
  }
  template <typename F>
  void Visit(F&& f) const
  {
    VisitImpl(*this, f);
  }

  std::size_t Count() const
  {
    std::size_t n = 0;
    Visit([&](const std::string&, const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  void SetZero()
  {
    Visit([](const std::string&, const std::string&, Mat<T>& m) { m.setZero(); });
  }

  /// this += other, tensor by tensor.
  void Add(const FusionParams& other)
  {
    std::vector<const Mat<T>*> src;
    other.Visit([&](const std::string&, const std::string&, const Mat<T>& m) { src.push_back(&m); });
    std::size_t i = 0;
    Visit([&](const std::string&, const std::string&, Mat<T>& m) { m += *src[i++]; });
  }

  void Scale(T s)
  {
    Visit([&](const std::string&, const std::string&, Mat<T>& m) { m *= s; });
  }

  bool AllFinite() const
  {
    bool ok = true;
    Visit([&](const std::string&, const std::string&, const Mat<T>& m) { ok = ok && m.allFinite(); });
    return ok;
  }

 private:
  template <typename Self, typename F>
  static void VisitImpl(Self& p, F& f)
  {
    auto linear = [&](const std::string& group, const std::string& prefix, auto& l) {
      f(group, prefix + "weight", l.weight);
      f(group, prefix + "bias", l.bias);
    };
    auto attention = [&](const std::string& group, auto& a) {
      linear(group, group + ".offsets.", a.offsets);
      linear(group, group + ".logits.", a.logits);
      linear(group, group + ".output.", a.output);
    };
    linear("encoder_rgb", "encoder_rgb.", p.encoder_rgb);
    linear("encoder_depth", "encoder_depth.", p.encoder_depth);
    linear("query_rgb", "query_rgb.", p.query_rgb);
    linear("value_rgb", "value_rgb.", p.value_rgb);
    linear("query_depth", "query_depth.", p.query_depth);
    linear("value_depth", "value_depth.", p.value_depth);
    attention("attn_r2r", p.r2r);
    attention("attn_d2r", p.d2r);
    attention("attn_d2d", p.d2d);
    attention("attn_r2d", p.r2d);
    linear("weighting", "weighting.conv3.", p.weight_conv3);
    linear("weighting", "weighting.conv1.", p.weight_conv1);
    linear("classifier", "classifier.", p.classifier);
  }
};

/// Training initialization: scaled Gaussian weights, zero biases, and a
/// zeroed offset predictor so every head starts at its reference point.
template <typename T>
FusionParams<T> InitParams(const FusionConfig& config, std::uint64_t seed)
{
  auto p = FusionParams<T>::Zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  p.Visit([&](const std::string&, const std::string& name, Mat<T>& m) {
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias || name.find(".offsets.") != std::string::npos)
    {
      return;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
    {
      m.data()[i] = static_cast<T>(scale * normal(rng));
    }
  });
  return p;
}

/// Flat little-endian float64 container plus a JSON manifest naming every
/// tensor with its shape and offset (in elements).
template <typename T>
void SaveParams(const FusionParams<T>& params, const std::filesystem::path& binary,
                const std::filesystem::path& manifest)
{
  std::ofstream out(binary, std::ios::binary);
  if (!out)
  {
    throw InputError("cannot write " + binary.string());
  }
  const char magic[4] = {'I', 'L', 'F', 'P'};
  out.write(magic, 4);
  const std::uint64_t count = params.Count();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  params.Visit([&](const std::string& group, const std::string& name, const Mat<T>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
    {
      const double v = static_cast<double>(m.data()[i]);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    tensors.push_back({{"name", name}, {"group", group}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  });
  if (!out)
  {
    throw InputError("write failed: " + binary.string());
  }
  std::ofstream js(manifest);
  js << nlohmann::json{{"format", "instloc-fusion-params"},
                       {"version", 1},
                       {"dtype", "float64"},
                       {"count", count},
                       {"config", params.config.ToJson()},
                       {"tensors", tensors}}
            .dump(2)
     << "\n";
  if (!js)
  {
    throw InputError("write failed: " + manifest.string());
  }
}

template <typename T>
FusionParams<T> LoadParams(const std::filesystem::path& binary, const std::filesystem::path& manifest)
{
  std::ifstream js(manifest);
  if (!js)
  {
    throw InputError("cannot read " + manifest.string());
  }
  nlohmann::json m;
  try
  {
    m = nlohmann::json::parse(js);
  }
  catch (const nlohmann::json::exception& e)
  {
    throw InputError("param manifest: " + std::string(e.what()));
  }
  if (m.value("dtype", "") != "float64")
  {
    throw InputError("param manifest: unsupported dtype");
  }
  auto params = FusionParams<T>::Zeros(FusionConfig::FromJson(m.at("config")));
  const auto& tensors = m.at("tensors");

  std::ifstream in(binary, std::ios::binary);
  char magic[4] = {};
  std::uint64_t count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || std::memcmp(magic, "ILFP", 4) != 0)
  {
    throw InputError("not a fusion parameter file: " + binary.string());
  }
  if (count != params.Count() || tensors.size() == 0)
  {
    throw InputError("param file holds " + std::to_string(count) + " values, config needs " +
                     std::to_string(params.Count()));
  }
  std::size_t k = 0;
  params.Visit([&](const std::string&, const std::string& name, Mat<T>& t) {
    if (k >= tensors.size() || tensors[k].at("name") != name ||
        tensors[k].at("shape") != nlohmann::json{t.rows(), t.cols()})
    {
      throw InputError("param manifest does not match the model at tensor " + name);
    }
    ++k;
    for (Eigen::Index i = 0; i < t.size(); ++i)
    {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      t.data()[i] = static_cast<T>(v);
    }
  });
  if (!in)
  {
    throw InputError("truncated param file: " + binary.string());
  }
  if (!params.AllFinite())
  {
    throw InputError("param file contains non-finite values");
  }
  return params;
}
}  // namespace instloc::fusion
