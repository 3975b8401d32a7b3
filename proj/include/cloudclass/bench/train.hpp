#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cloudclass/ad/optim.hpp"
#include "cloudclass/bench/dataset.hpp"
#include "cloudclass/models/network.hpp"

namespace cloudclass::bench {

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double lr_decay = 0.7;       // multiplied in every lr_step_epochs
    std::size_t lr_step_epochs = 20;
    std::uint64_t seed = 0;
    pipeline::AugmentSpec augment;
    // "trained to convergence": stop after `patience` consecutive epochs
    // whose mean train loss improves by less than `min_improvement`.
    double min_improvement = 1e-4;
    std::size_t patience = 10;

    void validate() const {
        if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
        if (batch_size < 2) throw ValidationError("train: batch_size must be >= 2 (batch norm)");
        if (lr <= 0) throw ValidationError("train: lr must be positive");
        augment.validate();
    }
};

struct EpochLog {
    std::size_t epoch = 0;
    double l_total = 0, l_class = 0, l_seg = 0;
    double train_oa = 0; // percent, from the training-time forward passes
    double seconds = 0;
    std::size_t steps = 0;
};

inline void write_train_log(const std::vector<EpochLog>& logs,
                            const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << "epoch,l_total,l_class,l_seg,train_oa,seconds,steps\n";
    for (const auto& log : logs)
        f << log.epoch << ',' << log.l_total << ',' << log.l_class << ',' << log.l_seg << ','
          << log.train_oa << ',' << log.seconds << ',' << log.steps << '\n';
}

/// One seeded training run: per epoch, shuffle, batch (dropping a trailing
/// batch of size 1), augment, forward, loss, Adam step. Deterministic for a
/// fixed (network seed, data, config).
template <typename S>
std::vector<EpochLog> train(models::Network<S>& net, const Dataset& data,
                            const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() == 0) throw ValidationError("train: empty training split");
    const auto& mcfg = net.config();
    const bool bga = models::is_bga(mcfg.variant);
    const SeedSpec seeds{cfg.seed};

    ad::Adam<S> opt(static_cast<S>(cfg.lr));
    std::vector<EpochLog> logs;
    double best_loss = std::numeric_limits<double>::max();
    std::size_t stall = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        opt.set_lr(static_cast<S>(
            cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_step_epochs))));

        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(seeds.derive("shuffle", epoch));
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.below(i + 1)]);

        EpochLog log;
        log.epoch = epoch;
        std::size_t correct = 0, seen = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            if (len < 2) break; // batch-norm precondition: drop a trailing singleton
            const std::size_t batch_index = start / cfg.batch_size;

            try {
                auto batch = assemble_batch<S>(data, {order.data() + start, len},
                                               mcfg.num_points, epoch, seeds, true, cfg.augment);
                net.zero_grad();
                ad::Tape<S> tape;
                models::ForwardContext<S> ctx;
                ctx.training = true;
                ctx.dropout_seed = seeds.derive("dropout", epoch * 1000003 + batch_index);
                auto out = net.forward(&tape, batch.points, ctx);

                ad::Tensor<S> total;
                if (bga) {
                    auto loss = models::joint_loss(&tape, out.class_logits, batch.labels,
                                                   out.mask_logits, batch.masks,
                                                   static_cast<S>(mcfg.lambda));
                    total = loss.total;
                    log.l_class += static_cast<double>(loss.classification.item());
                    log.l_seg += static_cast<double>(loss.segmentation.item());
                } else {
                    total = ad::softmax_cross_entropy(&tape, out.class_logits, batch.labels);
                    log.l_class += static_cast<double>(total.item());
                }
                log.l_total += static_cast<double>(total.item());
                tape.backward(total);
                opt.step(net.parameters());

                const std::size_t c = mcfg.num_classes();
                for (std::size_t b = 0; b < len; ++b) {
                    const S* row = out.class_logits.values().data() + b * c;
                    std::size_t arg = 0;
                    for (std::size_t j = 1; j < c; ++j)
                        if (row[j] > row[arg]) arg = j;
                    correct += arg == batch.labels[b];
                    ++seen;
                }
                ++log.steps;
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index) + ")");
            }
        }

        if (log.steps == 0) throw ValidationError("train: no usable batch (need >= 2 objects)");
        log.l_total /= static_cast<double>(log.steps);
        log.l_class /= static_cast<double>(log.steps);
        log.l_seg /= static_cast<double>(log.steps);
        log.train_oa = 100.0 * static_cast<double>(correct) / static_cast<double>(seen);
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        logs.push_back(log);

        if (best_loss - log.l_total < cfg.min_improvement) {
            if (++stall >= cfg.patience) break;
        } else {
            stall = 0;
        }
        best_loss = std::min(best_loss, log.l_total);
    }
    return logs;
}

} // namespace cloudclass::bench
