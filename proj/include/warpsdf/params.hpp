#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "warpsdf/common.hpp"

namespace warpsdf {

// Flat storage for every learnable quantity, addressed by named blocks.
// Blocks marked sparse_grad (feature grids) get hashed sparse accumulation in
// gradient sinks instead of dense per-chunk buffers.
template <class Real>
class ParamStore {
 public:
  struct Block {
    std::string name;
    std::vector<int> shape;
    std::vector<Real> v;
    bool sparse_grad = false;
    int sparse_row_dim = 0;  // channels per sparse row

    std::size_t size() const { return v.size(); }
  };

  int add(const std::string& name, std::vector<int> shape, bool sparse_grad = false,
          int sparse_row_dim = 0) {
    require(by_name_.find(name) == by_name_.end(), "param block already exists: ", name);
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    Block b;
    b.name = name;
    b.shape = std::move(shape);
    b.v.assign(n, Real(0));
    b.sparse_grad = sparse_grad;
    b.sparse_row_dim = sparse_row_dim;
    blocks_.push_back(std::move(b));
    by_name_[name] = int(blocks_.size()) - 1;
    return int(blocks_.size()) - 1;
  }

  int find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
  }

  Block& block(int id) { return blocks_.at(std::size_t(id)); }
  const Block& block(int id) const { return blocks_.at(std::size_t(id)); }
  int count() const { return int(blocks_.size()); }

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  // Resizes a block in place (grid upsampling); shape/value semantics are the
  // caller's business.
  void reshape(int id, std::vector<int> shape, std::vector<Real> values) {
    Block& b = blocks_.at(std::size_t(id));
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    require(values.size() == n, "reshape: value count mismatch for ", b.name);
    b.shape = std::move(shape);
    b.v = std::move(values);
  }

 private:
  std::vector<Block> blocks_;
  std::unordered_map<std::string, int> by_name_;
};

// Per-chunk gradient accumulator. Dense buffers for ordinary blocks; an
// open-addressed row map for sparse blocks. Sinks are merged on the main
// thread in chunk order, which keeps gradients independent of the worker
// count.
template <class Real>
class GradSink {
 public:
  explicit GradSink(const ParamStore<Real>* store) : store_(store) {
    dense_.resize(std::size_t(store->count()));
    sparse_.resize(std::size_t(store->count()));
  }

  Real* dense(int block) {
    auto& buf = dense_[std::size_t(block)];
    if (buf.empty()) buf.assign(store_->block(block).size(), Real(0));
    return buf.data();
  }

  // Accumulation row for a sparse block (row = grid node index).
  Real* sparse_row(int block, std::int64_t row) {
    SparseBlock& sb = sparse_[std::size_t(block)];
    const int dim = store_->block(block).sparse_row_dim;
    if (sb.keys.empty()) sb.init(256, dim);
    if (sb.used * 2 >= std::int64_t(sb.keys.size())) sb.grow(dim);
    return sb.insert(row, dim);
  }

  bool touched(int block) const {
    return !dense_[std::size_t(block)].empty() || sparse_[std::size_t(block)].used > 0;
  }

  // Adds this sink into a full-size per-block gradient (dense layout for all
  // blocks). Sparse rows merge in ascending row order.
  void merge_into(std::vector<std::vector<Real>>& grad) const {
    for (int bid = 0; bid < store_->count(); ++bid) {
      const auto& d = dense_[std::size_t(bid)];
      if (!d.empty()) {
        auto& g = grad[std::size_t(bid)];
        for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
      }
      const SparseBlock& sb = sparse_[std::size_t(bid)];
      if (sb.used > 0) {
        const int dim = store_->block(bid).sparse_row_dim;
        auto& g = grad[std::size_t(bid)];
        std::vector<std::int64_t> order;
        order.reserve(std::size_t(sb.used));
        for (std::size_t s = 0; s < sb.keys.size(); ++s)
          if (sb.keys[s] >= 0) order.push_back(std::int64_t(s));
        std::sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
          return sb.keys[std::size_t(x)] < sb.keys[std::size_t(y)];
        });
        for (std::int64_t slot : order) {
          std::int64_t row = sb.keys[std::size_t(slot)];
          const Real* src = &sb.vals[std::size_t(slot) * dim];
          Real* dst = &g[std::size_t(row) * dim];
          for (int c = 0; c < dim; ++c) dst[c] += src[c];
        }
      }
    }
  }

 private:
  struct SparseBlock {
    std::vector<std::int64_t> keys;  // -1 = empty
    std::vector<Real> vals;
    std::int64_t used = 0;

    void init(std::size_t cap, int dim) {
      keys.assign(cap, -1);
      vals.assign(cap * std::size_t(dim), Real(0));
      used = 0;
    }
    Real* insert(std::int64_t row, int dim) {
      std::size_t mask = keys.size() - 1;
      std::size_t h = std::size_t(row * 0x9e3779b97f4a7c15ull) & mask;
      while (keys[h] >= 0 && keys[h] != row) h = (h + 1) & mask;
      if (keys[h] < 0) {
        keys[h] = row;
        ++used;
      }
      return &vals[h * std::size_t(dim)];
    }
    void grow(int dim) {
      std::vector<std::int64_t> old_keys = std::move(keys);
      std::vector<Real> old_vals = std::move(vals);
      init(old_keys.size() * 2, dim);
      for (std::size_t s = 0; s < old_keys.size(); ++s)
        if (old_keys[s] >= 0) {
          Real* dst = insert(old_keys[s], dim);
          for (int c = 0; c < dim; ++c) dst[c] += old_vals[s * std::size_t(dim) + c];
        }
    }
  };

  const ParamStore<Real>* store_;
  std::vector<std::vector<Real>> dense_;
  std::vector<SparseBlock> sparse_;

  friend class GradSinkTestPeek;
};

template <class Real>
std::vector<std::vector<Real>> make_zero_gradient(const ParamStore<Real>& store) {
  std::vector<std::vector<Real>> g(std::size_t(store.count()));
  for (int b = 0; b < store.count(); ++b) g[std::size_t(b)].assign(store.block(b).size(), Real(0));
  return g;
}

}  // namespace warpsdf
