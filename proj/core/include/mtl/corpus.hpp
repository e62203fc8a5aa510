#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtl/error.hpp"
#include "mtl/random.hpp"
#include "mtl/task.hpp"

namespace mtl {

struct LabeledPost {
  std::string id;
  std::string text;
  int label = 0;  // 1 = positive (stressful / depressive)
  Task task = Task::kDepression;

  friend bool operator==(const LabeledPost&, const LabeledPost&) = default;
};

enum class FileFormat { kDelimited, kJsonLines };

// Column mapping for one dataset file.
struct DatasetSchema {
  FileFormat format = FileFormat::kDelimited;
  char delimiter = ',';
  std::string text_column = "text";
  std::string label_column = "label";
  std::string id_column;  // empty: ids are "<task>-<row>"
};

// One LabeledPost per data row, in file order. Rejects unreadable files,
// labels outside {0,1}, blank texts and duplicate ids, naming the rows.
std::vector<LabeledPost> load_dataset(const std::filesystem::path& path, Task task, const DatasetSchema& schema);

enum class SplitName { kTrain, kValidation, kTest };

const char* to_string(SplitName split);
SplitName parse_split(std::string_view text);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;

  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

// 70/10/20 with round-half-up on train and validation, remainder to test.
SplitSizes split_sizes(std::size_t n);

struct SplitCorpus {
  std::vector<LabeledPost> train;
  std::vector<LabeledPost> validation;
  std::vector<LabeledPost> test;
  std::uint64_t seed = 0;

  const std::vector<LabeledPost>& part(SplitName split) const;
  SplitSizes sizes() const { return {train.size(), validation.size(), test.size()}; }

  friend bool operator==(const SplitCorpus&, const SplitCorpus&) = default;
};

inline constexpr std::size_t kMinimumSplitInput = 10;

// Seeded uniform shuffle then contiguous cut; no stratification.
SplitCorpus split_corpus(std::vector<LabeledPost> posts, std::uint64_t seed);

struct ClassBalance {
  std::size_t negatives = 0;
  std::size_t positives = 0;
};

ClassBalance class_balance(const std::vector<LabeledPost>& posts);

// Record file of (id, split) rows so a split can be rebuilt without its seed.
void write_split_manifest(const std::filesystem::path& path, const SplitCorpus& split);
SplitCorpus read_split_manifest(const std::filesystem::path& path, const std::vector<LabeledPost>& posts);

template <typename T>
struct TaskBatchPair {
  std::vector<T> depression;
  std::vector<T> stress;

  std::vector<T>& operator[](Task t) { return t == Task::kDepression ? depression : stress; }
  const std::vector<T>& operator[](Task t) const { return t == Task::kDepression ? depression : stress; }
};

// Draws items from a list in shuffled order, reshuffling each time the list
// is exhausted. Used for the shorter dataset in a paired stream.
template <typename T>
class CyclingSampler {
 public:
  CyclingSampler(const std::vector<T>& items, std::uint64_t seed) : items_(&items), seed_(seed) { reshuffle(); }

  std::vector<T> take(std::size_t count) {
    std::vector<T> out;
    out.reserve(count);
    while (out.size() < count) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back((*items_)[order_[cursor_++]]);
    }
    return out;
  }

  std::size_t wraps() const { return wraps_; }

 private:
  void reshuffle() {
    order_.resize(items_->size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    Rng rng(mix_seed(seed_, wraps_));
    rng.shuffle(order_);
    cursor_ = 0;
    ++wraps_;
  }

  const std::vector<T>* items_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t wraps_ = 0;
};

// Joint-training stream over two differently sized task datasets. An epoch
// has ceil(max(|depression|, |stress|) / batch_size) pairs; the longer
// dataset is visited exactly once, the shorter one cycles with reshuffling.
// Single consumer; epoch(e) is a pure function of (data, batch_size, seed, e).
template <typename T>
class PairedStream {
 public:
  PairedStream(std::vector<T> depression, std::vector<T> stress, std::size_t batch_size, std::uint64_t seed)
      : data_{std::move(depression), std::move(stress)}, batch_size_(batch_size), seed_(seed) {
    require(!data_.depression.empty() && !data_.stress.empty(), ErrorCode::kInvalidArgument,
            "paired stream needs non-empty depression and stress splits");
    require(batch_size_ >= 1, ErrorCode::kInvalidArgument, "batch size must be at least 1");
  }

  std::size_t pairs_per_epoch() const {
    const std::size_t longest = std::max(data_.depression.size(), data_.stress.size());
    return (longest + batch_size_ - 1) / batch_size_;
  }

  Task longer_task() const {
    return data_.stress.size() > data_.depression.size() ? Task::kStress : Task::kDepression;
  }

  const PerTask<std::vector<T>>& data() const { return data_; }

  std::vector<TaskBatchPair<T>> epoch(std::size_t index) const {
    const std::uint64_t epoch_seed = mix_seed(seed_, index);
    CyclingSampler<T> depr(data_.depression, derive_seed(epoch_seed, "depression"));
    CyclingSampler<T> stress(data_.stress, derive_seed(epoch_seed, "stress"));
    const std::size_t longest = std::max(data_.depression.size(), data_.stress.size());
    std::vector<TaskBatchPair<T>> pairs;
    pairs.reserve(pairs_per_epoch());
    for (std::size_t start = 0; start < longest; start += batch_size_) {
      const std::size_t count = std::min(batch_size_, longest - start);
      pairs.push_back({depr.take(count), stress.take(count)});
    }
    return pairs;
  }

 private:
  PerTask<std::vector<T>> data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

// Shuffled single-task batches for one epoch.
template <typename T>
std::vector<std::vector<T>> shuffled_batches(const std::vector<T>& items, std::size_t batch_size, std::uint64_t seed,
                                             std::size_t epoch) {
  require(!items.empty(), ErrorCode::kInvalidArgument, "cannot batch an empty split");
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be at least 1");
  CyclingSampler<T> sampler(items, mix_seed(seed, epoch));
  std::vector<std::vector<T>> batches;
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    batches.push_back(sampler.take(std::min(batch_size, items.size() - start)));
  }
  return batches;
}

}  // namespace mtl
