#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "instloc/fusion/batch.hpp"

namespace instloc::fusion
{
/// Standard retrieval mAP: per query, average precision of the gallery
/// ranked by L2 distance (ties by gallery index), same label = relevant.
template <typename T>
double MeanAveragePrecision(const Mat<T>& queries, const std::vector<int>& query_labels, const Mat<T>& gallery,
                            const std::vector<int>& gallery_labels, double* rank1 = nullptr)
{
  if (static_cast<std::size_t>(queries.rows()) != query_labels.size() ||
      static_cast<std::size_t>(gallery.rows()) != gallery_labels.size() || queries.rows() == 0 ||
      queries.cols() != gallery.cols())
  {
    throw InputError("mAP: embeddings and labels must align");
  }
  double sum_ap = 0.0;
  double hits = 0.0;
  for (Eigen::Index q = 0; q < queries.rows(); ++q)
  {
    const int label = query_labels[static_cast<std::size_t>(q)];
    if (std::find(gallery_labels.begin(), gallery_labels.end(), label) == gallery_labels.end())
    {
      throw InputError("mAP: query label " + std::to_string(label) + " absent from the gallery");
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    for (Eigen::Index g = 0; g < gallery.rows(); ++g)
    {
      ranked.emplace_back(static_cast<double>((queries.row(q) - gallery.row(g)).squaredNorm()),
                          static_cast<std::size_t>(g));
    }
    std::sort(ranked.begin(), ranked.end());
    double found = 0.0;
    double ap = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r)
    {
      if (gallery_labels[ranked[r].second] == label)
      {
        found += 1.0;
        ap += found / static_cast<double>(r + 1);
      }
    }
    sum_ap += ap / found;
    hits += gallery_labels[ranked.front().second] == label ? 1.0 : 0.0;
  }
  if (rank1 != nullptr)
  {
    *rank1 = hits / static_cast<double>(queries.rows());
  }
  return sum_ap / static_cast<double>(queries.rows());
}

struct ToyDatasetConfig
{
  int identities = 8;
  int views = 16;
  int held_out = 4;  // last views of each identity are queries
  int image = 16;
  double rgb_noise = 0.02;
  double depth_noise = 0.005;
};

struct ToyDataset
{
  ToyDatasetConfig config;
  std::vector<RgbdPatch<double>> samples;
  std::vector<int> labels;
  std::vector<int> views;

  bool HeldOut(std::size_t i) const { return views[i] >= config.views - config.held_out; }
};

/// Procedural RGB-D identity patches. Each identity has two colors striped
/// at its own angle and frequency, and a depth surface with its own tilt
/// and central bump. Views vary stripe phase, brightness, depth offset, bump
/// position and pixel noise.
inline ToyDataset MakeToyDataset(const ToyDatasetConfig& config, std::uint64_t seed)
{
  if (config.identities < 2 || config.views < 2 || config.held_out < 1 || config.held_out >= config.views ||
      config.image < 2)
  {
    throw ConfigError("toy dataset: need >= 2 identities, >= 2 views and 1 <= held_out < views");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ToyDataset data;
  data.config = config;
  const int s = config.image;
  for (int id = 0; id < config.identities; ++id)
  {
    const Eigen::Vector3d c1(0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng));
    const Eigen::Vector3d c2(0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng));
    const double angle = M_PI * uni(rng);
    const double freq = 0.3 + 0.5 * uni(rng);
    const double tilt_x = -0.4 + 0.8 * uni(rng);
    const double tilt_y = -0.4 + 0.8 * uni(rng);
    const double bump = -0.3 + 0.6 * uni(rng);
    for (int v = 0; v < config.views; ++v)
    {
      const double phase = 2.0 * M_PI * uni(rng);
      const double gain = 0.85 + 0.3 * uni(rng);
      const double offset = 0.05 * (2.0 * uni(rng) - 1.0);
      const double bx = 0.5 + 0.1 * (2.0 * uni(rng) - 1.0);
      const double by = 0.5 + 0.1 * (2.0 * uni(rng) - 1.0);
      RgbdPatch<double> p;
      p.size = s;
      p.rgb = Mat<double>(s * s, 3);
      p.depth = Mat<double>(s * s, 1);
      for (int y = 0; y < s; ++y)
      {
        for (int x = 0; x < s; ++x)
        {
          const double u = (x + 0.5) / s;
          const double w = (y + 0.5) / s;
          const double stripe =
              0.5 + 0.5 * std::sin(freq * (x * std::cos(angle) + y * std::sin(angle)) + phase);
          const Eigen::Vector3d rgb = gain * (stripe * c1 + (1.0 - stripe) * c2);
          for (int ch = 0; ch < 3; ++ch)
          {
            p.rgb(y * s + x, ch) = std::clamp(rgb[ch] + config.rgb_noise * normal(rng), 0.0, 1.0);
          }
          const double r2 = (u - bx) * (u - bx) + (w - by) * (w - by);
          p.depth(y * s + x, 0) = 1.0 + offset + tilt_x * (u - 0.5) + tilt_y * (w - 0.5) +
                                  bump * std::exp(-r2 / 0.05) + config.depth_noise * normal(rng);
        }
      }
      data.samples.push_back(std::move(p));
      data.labels.push_back(id);
      data.views.push_back(v);
    }
  }
  return data;
}

struct ToyTrainConfig
{
  FusionConfig model;  // classes are set from the dataset
  DropoutConfig dropout;
  int steps = 200;
  double learning_rate = 0.01;
  int views_per_identity = 4;  // batch = identities x this
  double margin = 0.3;

  ToyTrainConfig()
  {
    model.image = 16;
    model.patch = 4;
    model.embed = 16;
  }
};

struct RetrievalMetrics
{
  double rank1 = 0.0;
  double map = 0.0;
};

struct ToyTrainResult
{
  FusionParams<double> params;
  std::vector<double> step_losses;  // minibatch loss before each update
  double initial_loss = 0.0;        // full training split, no dropout
  double final_loss = 0.0;
  RetrievalMetrics both;
  RetrievalMetrics rgb_only;
  RetrievalMetrics depth_only;
};

/// Held-out views query the training views of every identity.
inline RetrievalMetrics EvaluateRetrieval(const ToyDataset& data, const FusionParams<double>& params,
                                          DropoutCase mode)
{
  std::vector<std::size_t> query_idx;
  std::vector<std::size_t> gallery_idx;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
  {
    (data.HeldOut(i) ? query_idx : gallery_idx).push_back(i);
  }
  auto embed = [&](const std::vector<std::size_t>& idx, std::vector<int>& labels) {
    Mat<double> e(static_cast<Eigen::Index>(idx.size()), params.config.embed);
    ParallelFor(idx.size(), [&](std::size_t k) {
      e.row(static_cast<Eigen::Index>(k)) = EmbedSample(data.samples[idx[k]], params, mode);
    });
    for (std::size_t i : idx)
    {
      labels.push_back(data.labels[i]);
    }
    return e;
  };
  std::vector<int> ql;
  std::vector<int> gl;
  const Mat<double> q = embed(query_idx, ql);
  const Mat<double> g = embed(gallery_idx, gl);
  RetrievalMetrics m;
  m.map = MeanAveragePrecision(q, ql, g, gl, &m.rank1);
  return m;
}

/// Adam on every group except the frozen stub encoder. Each step draws
/// views_per_identity training views per identity and a dropout case per
/// sample.
inline ToyTrainResult ToyTrain(const ToyDataset& data, ToyTrainConfig config, std::uint64_t seed)
{
  config.model.classes = data.config.identities;
  config.model.image = data.config.image;
  config.model.Validate();
  config.dropout.Validate();
  if (config.steps < 1 || !(config.learning_rate > 0.0) || config.views_per_identity < 2)
  {
    throw ConfigError("toy_train: need steps >= 1, learning rate > 0 and >= 2 views per identity");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::map<int, std::vector<std::size_t>> train_views;
  Batch<double> train_all;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
  {
    if (!data.HeldOut(i))
    {
      train_views[data.labels[i]].push_back(i);
      train_all.samples.push_back(data.samples[i]);
      train_all.labels.push_back(data.labels[i]);
    }
  }
  for (const auto& [id, v] : train_views)
  {
    if (v.size() < static_cast<std::size_t>(config.views_per_identity))
    {
      throw ConfigError("toy_train: identity " + std::to_string(id) + " has too few training views");
    }
  }

  ToyTrainResult out;
  out.params = InitParams<double>(config.model, seed);
  FusionParams<double> m1 = FusionParams<double>::Zeros(config.model);
  FusionParams<double> m2 = FusionParams<double>::Zeros(config.model);
  FusionParams<double> grad;
  out.initial_loss = BatchLoss(train_all, out.params, config.margin).total;
  const double b1 = 0.9;
  const double b2 = 0.999;
  for (int step = 0; step < config.steps; ++step)
  {
    Batch<double> batch;
    for (auto& [id, views] : train_views)
    {
      std::shuffle(views.begin(), views.end(), rng);
      for (int k = 0; k < config.views_per_identity; ++k)
      {
        batch.samples.push_back(data.samples[views[static_cast<std::size_t>(k)]]);
        batch.labels.push_back(id);
        batch.dropout.push_back(config.dropout.Select(uni(rng)));
      }
    }
    const auto loss = BatchLoss(batch, out.params, config.margin, &grad);
    if (!std::isfinite(loss.total) || !grad.AllFinite())
    {
      throw NumericalError("toy_train: diverged at step " + std::to_string(step) + " (ce " +
                           std::to_string(loss.cross_entropy) + ", triplet " + std::to_string(loss.triplet) + ")");
    }
    out.step_losses.push_back(loss.total);

    const double c1 = 1.0 - std::pow(b1, step + 1);
    const double c2 = 1.0 - std::pow(b2, step + 1);
    std::vector<Mat<double>*> gs;
    std::vector<Mat<double>*> ms;
    std::vector<Mat<double>*> vs;
    grad.Visit([&](const std::string&, const std::string&, Mat<double>& t) { gs.push_back(&t); });
    m1.Visit([&](const std::string&, const std::string&, Mat<double>& t) { ms.push_back(&t); });
    m2.Visit([&](const std::string&, const std::string&, Mat<double>& t) { vs.push_back(&t); });
    std::size_t k = 0;
    out.params.Visit([&](const std::string& group, const std::string&, Mat<double>& w) {
      const std::size_t i = k++;
      if (group.rfind("encoder", 0) == 0)
      {
        return;
      }
      const Mat<double>& g = *gs[i];
      Mat<double>& m = *ms[i];
      Mat<double>& v = *vs[i];
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      w.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
    });
  }
  out.final_loss = BatchLoss(train_all, out.params, config.margin).total;
  if (!std::isfinite(out.final_loss))
  {
    throw NumericalError("toy_train: non-finite final loss");
  }
  out.both = EvaluateRetrieval(data, out.params, DropoutCase::kBoth);
  out.rgb_only = EvaluateRetrieval(data, out.params, DropoutCase::kRgbOnly);
  out.depth_only = EvaluateRetrieval(data, out.params, DropoutCase::kDepthOnly);
  return out;
}
}  // namespace instloc::fusion
