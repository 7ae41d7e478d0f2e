#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ncre {

/// Two aligned minibatches of sample indices; batch_a[i] and batch_b[i] form
/// a positive pair sharing labels[i].
struct PairBatch {
  std::vector<std::size_t> batch_a;
  std::vector<std::size_t> batch_b;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  bool operator==(const PairBatch&) const = default;
};

/// One epoch of positive-pair batches over a dataset given by its per-sample
/// labels.
///
/// Classes with fewer than two samples are skipped. Every remaining sample is
/// used once as an anchor in batch_a; anchors are dealt round-robin over the
/// classes in a seeded order so each batch mixes as many labels as possible.
/// Partners come from a per-class shuffled deck that never hands a sample its
/// own index and is reshuffled when it runs out. A trailing batch with fewer
/// than two positions is dropped. Throws EmptyPairingError when no class has
/// two samples, ContractError when batch_size < 2.
std::vector<PairBatch> build_pair_batches(std::span<const std::size_t> sample_labels,
                                          std::size_t batch_size, std::uint64_t seed);

/// True iff the batch is aligned, every pair shares its label, and no sample
/// is paired with itself unless its class is a singleton.
bool validate_pair_batch(const PairBatch& batch, std::span<const std::size_t> sample_labels);

}  // namespace ncre
