#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace instloc::geometry
{
/// Static 3-D kd-tree over a borrowed point array. The points must outlive
/// the tree and stay unmodified.
class KdTree3
{
public:
  struct Neighbor
  {
    std::size_t index;
    double dist2;
  };

  KdTree3() = default;

  explicit KdTree3(const std::vector<Eigen::Vector3d>& points) : points_(&points)
  {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points.size() / kLeafSize + 2);
    if (!points.empty())
    {
      Build(0, points.size(), 0);
    }
  }

  bool Empty() const { return points_ == nullptr || points_->empty(); }

  /// All points within radius of q, sorted by distance then index.
  std::vector<Neighbor> Radius(const Eigen::Vector3d& q, double radius) const
  {
    std::vector<Neighbor> out;
    if (Empty())
    {
      return out;
    }
    RadiusRec(0, q, radius * radius, out);
    std::sort(out.begin(), out.end(), Less);
    return out;
  }

  /// The k nearest points of q (fewer if the tree is smaller), ascending.
  std::vector<Neighbor> Knn(const Eigen::Vector3d& q, std::size_t k, double max_radius) const
  {
    std::vector<Neighbor> heap;
    if (Empty() || k == 0)
    {
      return heap;
    }
    heap.reserve(k + 1);
    KnnRec(0, q, k, max_radius * max_radius, heap);
    std::sort(heap.begin(), heap.end(), Less);
    return heap;
  }

  /// Nearest point within max_radius; index == npos when none.
  Neighbor Nearest(const Eigen::Vector3d& q,
                   double max_radius = std::numeric_limits<double>::infinity()) const
  {
    auto found = Knn(q, 1, max_radius);
    if (found.empty())
    {
      return {kNone, std::numeric_limits<double>::infinity()};
    }
    return found.front();
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node
  {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
    Eigen::Vector3d lo;
    Eigen::Vector3d hi;
  };

  static bool Less(const Neighbor& a, const Neighbor& b)
  {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }

  std::size_t Build(std::size_t begin, std::size_t end, int depth)
  {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (std::size_t i = begin; i < end; ++i)
    {
      node.lo = node.lo.cwiseMin((*points_)[order_[i]]);
      node.hi = node.hi.cwiseMax((*points_)[order_[i]]);
    }
    if (end - begin > kLeafSize)
    {
      Eigen::Vector3d extent = node.hi - node.lo;
      int axis = 0;
      extent.maxCoeff(&axis);
      const std::size_t mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                       order_.begin() + static_cast<std::ptrdiff_t>(mid),
                       order_.begin() + static_cast<std::ptrdiff_t>(end),
                       [&](std::size_t a, std::size_t b) { return (*points_)[a][axis] < (*points_)[b][axis]; });
      node.axis = axis;
      node.split = (*points_)[order_[mid]][axis];
      node.left = Build(begin, mid, depth + 1);
      node.right = Build(mid, end, depth + 1);
    }
    nodes_[id] = node;
    return id;
  }

  static double BoxDist2(const Node& node, const Eigen::Vector3d& q)
  {
    const Eigen::Vector3d d = (node.lo - q).cwiseMax(q - node.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  void RadiusRec(std::size_t id, const Eigen::Vector3d& q, double r2, std::vector<Neighbor>& out) const
  {
    const Node& node = nodes_[id];
    if (BoxDist2(node, q) > r2)
    {
      return;
    }
    if (node.axis < 0)
    {
      for (std::size_t i = node.begin; i < node.end; ++i)
      {
        const double d2 = ((*points_)[order_[i]] - q).squaredNorm();
        if (d2 <= r2)
        {
          out.push_back({order_[i], d2});
        }
      }
      return;
    }
    RadiusRec(node.left, q, r2, out);
    RadiusRec(node.right, q, r2, out);
  }

  void KnnRec(std::size_t id, const Eigen::Vector3d& q, std::size_t k, double r2,
              std::vector<Neighbor>& heap) const
  {
    const Node& node = nodes_[id];
    const double bound = heap.size() == k ? heap.front().dist2 : r2;
    if (BoxDist2(node, q) > bound)
    {
      return;
    }
    if (node.axis < 0)
    {
      for (std::size_t i = node.begin; i < node.end; ++i)
      {
        const Neighbor cand{order_[i], ((*points_)[order_[i]] - q).squaredNorm()};
        if (cand.dist2 > r2)
        {
          continue;
        }
        if (heap.size() < k)
        {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), Less);
        }
        else if (Less(cand, heap.front()))
        {
          std::pop_heap(heap.begin(), heap.end(), Less);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), Less);
        }
      }
      return;
    }
    const bool go_left = q[node.axis] < node.split;
    KnnRec(go_left ? node.left : node.right, q, k, r2, heap);
    KnnRec(go_left ? node.right : node.left, q, k, r2, heap);
  }

  const std::vector<Eigen::Vector3d>* points_ = nullptr;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};
}  // namespace instloc::geometry
