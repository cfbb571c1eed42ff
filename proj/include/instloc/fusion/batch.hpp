#pragma once

#include <vector>

#include "instloc/common.hpp"
#include "instloc/fusion/losses.hpp"
#include "instloc/fusion/model.hpp"

namespace instloc::fusion
{
template <typename T>
struct Batch
{
  std::vector<RgbdPatch<T>> samples;
  std::vector<int> labels;
  std::vector<DropoutCase> dropout;  // one per sample; empty means kBoth
};

template <typename T>
Mat<T> Logits(const Mat<T>& embeddings, const FusionParams<T>& p)
{
  return p.classifier.Forward(embeddings);
}

template <typename U, typename T>
FusionParams<U> CastParams(const FusionParams<T>& p)
{
  auto out = FusionParams<U>::Zeros(p.config);
  std::vector<const Mat<T>*> src;
  p.Visit([&](const std::string&, const std::string&, const Mat<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.Visit([&](const std::string&, const std::string&, Mat<U>& m) { m = src[i++]->template cast<U>(); });
  return out;
}

template <typename U, typename T>
Batch<U> CastBatch(const Batch<T>& b)
{
  Batch<U> out;
  out.labels = b.labels;
  out.dropout = b.dropout;
  for (const auto& s : b.samples)
  {
    out.samples.push_back({s.size, s.rgb.template cast<U>(), s.depth.template cast<U>()});
  }
  return out;
}

/// Total loss of a batch. When grad is given it receives d(scale * loss)
/// / d params; per-sample gradients are reduced in sample order so the
/// result does not depend on the thread count.
template <typename T>
LossValue<T> BatchLoss(const Batch<T>& batch, const FusionParams<T>& p, T margin, FusionParams<T>* grad = nullptr,
                       T scale = T(1))
{
  const std::size_t b = batch.samples.size();
  if (b == 0 || batch.labels.size() != b || !(batch.dropout.empty() || batch.dropout.size() == b))
  {
    throw InputError("fusion batch: samples, labels and dropout cases must align");
  }
  std::vector<SampleCache<T>> caches(b);
  Mat<T> embeddings(static_cast<Eigen::Index>(b), p.config.embed);
  ParallelFor(b, [&](std::size_t i) {
    const DropoutCase d = batch.dropout.empty() ? DropoutCase::kBoth : batch.dropout[i];
    embeddings.row(static_cast<Eigen::Index>(i)) = EmbedSample(batch.samples[i], p, d, &caches[i]);
  });
  const Mat<T> logits = Logits(embeddings, p);
  Mat<T> d_embeddings;
  Mat<T> d_logits;
  const bool backward = grad != nullptr;
  const LossValue<T> loss = Losses(embeddings, logits, batch.labels, margin, backward ? &d_embeddings : nullptr,
                                   backward ? &d_logits : nullptr);
  if (!backward)
  {
    return loss;
  }
  d_embeddings *= scale;
  d_logits *= scale;
  if (grad->Count() != p.Count())
  {
    *grad = FusionParams<T>::Zeros(p.config);
  }
  grad->SetZero();
  d_embeddings += p.classifier.Backward(embeddings, d_logits, grad->classifier);
  std::vector<FusionParams<T>> parts(b);
  ParallelFor(b, [&](std::size_t i) {
    parts[i] = FusionParams<T>::Zeros(p.config);
    EmbedSampleBackward(Mat<T>(d_embeddings.row(static_cast<Eigen::Index>(i))), caches[i], p, parts[i]);
  });
  for (const auto& part : parts)
  {
    grad->Add(part);
  }
  return loss;
}
}  // namespace instloc::fusion
