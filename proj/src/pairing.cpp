#include "ncre/pairing.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "ncre/errors.hpp"
#include "ncre/rng.hpp"

namespace ncre {

namespace {

struct ClassPool {
  std::size_t label = 0;
  std::vector<std::size_t> anchors;
  std::size_t next_anchor = 0;
  std::vector<std::size_t> deck;
  std::size_t next_card = 0;
};

std::size_t draw_partner(ClassPool& pool, std::size_t anchor, Rng& rng) {
  if (pool.next_card == pool.deck.size()) {
    rng.shuffle(pool.deck);
    pool.next_card = 0;
  }
  auto& d = pool.deck;
  if (d[pool.next_card] == anchor) {
    if (pool.next_card + 1 < d.size()) {
      std::swap(d[pool.next_card], d[pool.next_card + 1]);
    } else {
      // Only the anchor itself is left in this pass.
      rng.shuffle(d);
      pool.next_card = 0;
      if (d[0] == anchor) std::swap(d[0], d[1]);
    }
  }
  return d[pool.next_card++];
}

}  // namespace

std::vector<PairBatch> build_pair_batches(std::span<const std::size_t> sample_labels,
                                          std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw ContractError("batch_size must be at least 2");
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < sample_labels.size(); ++i) members[sample_labels[i]].push_back(i);

  Rng rng(seed);
  std::vector<ClassPool> pools;
  for (auto& [label, idx] : members) {
    if (idx.size() < 2) continue;
    pools.push_back(ClassPool{label, idx, 0, idx, 0});
  }
  if (pools.empty()) throw EmptyPairingError("no class has at least two samples to pair");
  rng.shuffle(pools);
  for (ClassPool& p : pools) {
    rng.shuffle(p.anchors);
    rng.shuffle(p.deck);
  }

  std::vector<PairBatch> batches;
  PairBatch current;
  bool remaining = true;
  while (remaining) {
    remaining = false;
    for (ClassPool& p : pools) {
      if (p.next_anchor == p.anchors.size()) continue;
      remaining = true;
      const std::size_t a = p.anchors[p.next_anchor++];
      current.batch_a.push_back(a);
      current.batch_b.push_back(draw_partner(p, a, rng));
      current.labels.push_back(p.label);
      if (current.size() == batch_size) {
        batches.push_back(std::move(current));
        current = PairBatch{};
      }
    }
  }
  if (current.size() >= 2) batches.push_back(std::move(current));
  return batches;
}

bool validate_pair_batch(const PairBatch& batch, std::span<const std::size_t> sample_labels) {
  if (batch.batch_a.size() != batch.batch_b.size() || batch.batch_a.size() != batch.labels.size()) {
    return false;
  }
  std::map<std::size_t, std::size_t> class_size;
  for (std::size_t l : sample_labels) ++class_size[l];
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t a = batch.batch_a[i], b = batch.batch_b[i];
    if (a >= sample_labels.size() || b >= sample_labels.size()) return false;
    if (sample_labels[a] != batch.labels[i] || sample_labels[b] != batch.labels[i]) return false;
    if (a == b && class_size[batch.labels[i]] >= 2) return false;
  }
  return true;
}

}  // namespace ncre
