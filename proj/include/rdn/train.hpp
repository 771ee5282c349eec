// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rdn/autodiff.hpp"
#include "rdn/checkpoint.hpp"
#include "rdn/data.hpp"
#include "rdn/model.hpp"
#include "rdn/optim.hpp"
#include "rdn/rng.hpp"

namespace rdn {

// The fixed training set: patches cut from each pair with a per-image stream.
inline std::vector<Patch> training_patches(std::span<const ImagePair> pairs, const TrainConfig& cfg) {
    std::vector<Patch> patches;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto cut = extract_patches(pairs[i], cfg.patch_lr, cfg.patches_per_image, derive_seed(cfg.seed, "patches", i),
                                   cfg.augment);
        for (auto& p : cut) patches.push_back(std::move(p));
    }
    return patches;
}

struct EpochStats {
    std::size_t epoch = 0;
    std::uint64_t end_step = 0;
    double lr = 0.0;
    double mean_l1 = 0.0;
    std::size_t batches = 0;
    double seconds = 0.0;
};

// Adam on L1 over a fixed patch set. The batch order of epoch e depends only
// on (rng_state, e), so a run can stop after any step and resume from a
// checkpoint onto the same trajectory.
class Trainer {
public:
    Trainer(const ModelConfig& model, const TrainConfig& train, std::vector<Patch> patches)
        : model_(model), train_(train), weights_(model), patches_(std::move(patches)) {
        train_.validate();
        if (patches_.empty()) throw UsageError("Trainer: empty dataset");
        kaiming_init(weights_, train_.seed);
        rng_state_ = splitmix64(train_.seed ^ fnv1a64("shuffle"));
    }

    const ModelConfig& model_config() const noexcept { return model_; }
    const TrainConfig& train_config() const noexcept { return train_; }
    RdnWeights<float>& weights() noexcept { return weights_; }
    const RdnWeights<float>& weights() const noexcept { return weights_; }
    std::size_t epoch() const noexcept { return epoch_; }
    std::uint64_t step() const noexcept { return step_; }
    std::size_t dataset_size() const noexcept { return patches_.size(); }

    std::size_t batches_per_epoch() const noexcept {
        return (patches_.size() + train_.batch_train - 1) / train_.batch_train;
    }

    // Runs one optimizer step and returns the batch L1 before the update.
    double train_step() {
        const std::vector<Batch>& batches = epoch_batches();
        const std::size_t pos = static_cast<std::size_t>(step_ - epoch_ * batches_per_epoch());
        const Batch& batch = batches[pos];

        Tape<float> tape;
        Var<float> pred = model_forward(tape, tape.constant(batch.lr), weights_);
        Var<float> loss = l1_loss(tape, pred, batch.hr);
        const double value = loss.value()[0];
        tape.backward(loss);
        ++step_;
        adam_step(weights_, lr_at(epoch_, train_), step_, train_);
        if (pos + 1 == batches.size()) ++epoch_;
        return value;
    }

    // Finishes the current epoch (all of it when called on an epoch boundary).
    EpochStats train_epoch() {
        const auto start = std::chrono::steady_clock::now();
        EpochStats stats;
        stats.epoch = epoch_;
        stats.lr = lr_at(epoch_, train_);
        const std::size_t target = epoch_ + 1;
        double total = 0.0;
        while (epoch_ < target) {
            total += train_step();
            ++stats.batches;
        }
        stats.mean_l1 = total / static_cast<double>(stats.batches);
        stats.end_step = step_;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return stats;
    }

    void train_steps(std::uint64_t count) {
        for (std::uint64_t i = 0; i < count; ++i) train_step();
    }

    Checkpoint checkpoint() const {
        Checkpoint ckpt;
        ckpt.model = model_;
        ckpt.train = train_;
        ckpt.epoch = epoch_;
        ckpt.step = step_;
        ckpt.rng_state = rng_state_;
        ckpt.tensors = snapshot_parameters(weights_);
        return ckpt;
    }

    // Adopts parameters, moments and counters from `ckpt`. Architecture
    // mismatches raise ShapeMismatchError naming the first offending tensor.
    void restore(const Checkpoint& ckpt) {
        restore_parameters(ckpt, weights_);
        if (ckpt.step < ckpt.epoch * batches_per_epoch() || ckpt.step >= (ckpt.epoch + 1) * batches_per_epoch()) {
            throw CheckpointError("checkpoint step " + std::to_string(ckpt.step) + " is inconsistent with epoch " +
                                  std::to_string(ckpt.epoch) + " for this dataset");
        }
        epoch_ = static_cast<std::size_t>(ckpt.epoch);
        step_ = ckpt.step;
        rng_state_ = ckpt.rng_state;
        cached_epoch_.reset();
    }

private:
    const std::vector<Batch>& epoch_batches() {
        if (cached_epoch_ != epoch_) {
            batches_ = make_batches(patches_, train_.batch_train, splitmix64(rng_state_ + epoch_));
            cached_epoch_ = epoch_;
        }
        return batches_;
    }

    ModelConfig model_;
    TrainConfig train_;
    RdnWeights<float> weights_;
    std::vector<Patch> patches_;
    std::size_t epoch_ = 0;
    std::uint64_t step_ = 0;
    std::uint64_t rng_state_ = 0;
    std::optional<std::size_t> cached_epoch_;
    std::vector<Batch> batches_;
};

}  // namespace rdn
