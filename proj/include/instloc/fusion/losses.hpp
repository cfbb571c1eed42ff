#pragma once

#include <cmath>
#include <set>
#include <vector>

#include "instloc/fusion/params.hpp"

namespace instloc::fusion
{
template <typename T>
struct LossValue
{
  T total = 0;
  T cross_entropy = 0;
  T triplet = 0;
};

/// Mean negative log-softmax of the true class. Writes dL/dlogits when
/// asked.
template <typename T>
T CrossEntropy(const Mat<T>& logits, const std::vector<int>& labels, Mat<T>* d_logits = nullptr)
{
  const auto b = logits.rows();
  if (b == 0 || static_cast<std::size_t>(b) != labels.size())
  {
    throw InputError("cross entropy: one label per logit row required");
  }
  if (d_logits != nullptr)
  {
    *d_logits = Mat<T>::Zero(b, logits.cols());
  }
  T loss = 0;
  for (Eigen::Index i = 0; i < b; ++i)
  {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols())
    {
      throw InputError("cross entropy: label " + std::to_string(y) + " outside the classifier head");
    }
    const T mx = logits.row(i).maxCoeff();
    const Mat<T> ex = (logits.row(i).array() - mx).exp().matrix();
    const T sum = ex.sum();
    loss += std::log(sum) + mx - logits(i, y);
    if (d_logits != nullptr)
    {
      d_logits->row(i) = ex / sum;
      (*d_logits)(i, y) -= 1;
    }
  }
  if (d_logits != nullptr)
  {
    *d_logits /= static_cast<T>(b);
  }
  return loss / static_cast<T>(b);
}

/// Batch-hard triplet loss on Euclidean distances: per anchor, farthest
/// positive minus nearest negative plus margin, clamped at zero, averaged
/// over anchors.
template <typename T>
T BatchHardTriplet(const Mat<T>& embeddings, const std::vector<int>& labels, T margin,
                   std::vector<T>* per_anchor = nullptr, Mat<T>* d_embeddings = nullptr)
{
  const auto b = embeddings.rows();
  if (static_cast<std::size_t>(b) != labels.size())
  {
    throw InputError("triplet: one label per embedding required");
  }
  if (std::set<int>(labels.begin(), labels.end()).size() < 2)
  {
    throw ConfigError("triplet: batch needs at least two identities");
  }
  Mat<T> dist(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
  {
    for (Eigen::Index j = 0; j < b; ++j)
    {
      dist(i, j) = (embeddings.row(i) - embeddings.row(j)).norm();
    }
  }
  if (d_embeddings != nullptr)
  {
    *d_embeddings = Mat<T>::Zero(b, embeddings.cols());
  }
  if (per_anchor != nullptr)
  {
    per_anchor->assign(static_cast<std::size_t>(b), T(0));
  }
  auto pull = [&](Eigen::Index i, Eigen::Index j, T scale) {
    // d ||e_i - e_j|| / d e_i = (e_i - e_j) / ||e_i - e_j||
    if (dist(i, j) > 0)
    {
      const Mat<T> g = (embeddings.row(i) - embeddings.row(j)) * (scale / dist(i, j));
      d_embeddings->row(i) += g;
      d_embeddings->row(j) -= g;
    }
  };
  T loss = 0;
  for (Eigen::Index i = 0; i < b; ++i)
  {
    Eigen::Index pos = -1;
    Eigen::Index neg = -1;
    for (Eigen::Index j = 0; j < b; ++j)
    {
      if (j == i)
      {
        continue;
      }
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)])
      {
        if (pos < 0 || dist(i, j) > dist(i, pos))
        {
          pos = j;
        }
      }
      else if (neg < 0 || dist(i, j) < dist(i, neg))
      {
        neg = j;
      }
    }
    if (pos < 0)
    {
      throw ConfigError("triplet: identity " + std::to_string(labels[static_cast<std::size_t>(i)]) +
                        " has a single sample in the batch");
    }
    const T l = dist(i, pos) - dist(i, neg) + margin;
    if (l > 0)
    {
      loss += l;
      if (per_anchor != nullptr)
      {
        (*per_anchor)[static_cast<std::size_t>(i)] = l;
      }
      if (d_embeddings != nullptr)
      {
        pull(i, pos, T(1) / static_cast<T>(b));
        pull(i, neg, T(-1) / static_cast<T>(b));
      }
    }
  }
  return loss / static_cast<T>(b);
}

/// CE on classifier logits plus batch-hard triplet on embeddings.
template <typename T>
LossValue<T> Losses(const Mat<T>& embeddings, const Mat<T>& logits, const std::vector<int>& labels, T margin,
                    Mat<T>* d_embeddings = nullptr, Mat<T>* d_logits = nullptr)
{
  LossValue<T> v;
  v.cross_entropy = CrossEntropy(logits, labels, d_logits);
  v.triplet = BatchHardTriplet(embeddings, labels, margin, static_cast<std::vector<T>*>(nullptr), d_embeddings);
  v.total = v.cross_entropy + v.triplet;
  return v;
}
}  // namespace instloc::fusion
