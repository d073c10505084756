#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/encoder/params.hpp"
#include "glvd/encoder/sdf_head.hpp"
#include "glvd/synth/corpus.hpp"
#include "glvd/tensor/optim.hpp"

namespace glvd {

struct SdfPretrainResult {
    std::vector<double> train_total;  // mean batch loss, one entry per epoch
    std::vector<double> val_surf;     // surface loss on the fixed val probe
    std::string checkpoint;
};

namespace detail {

// Fisher-Yates permutation of 0..n-1 from a dedicated stream, so epoch
// ordering never perturbs the draws used inside batches.
inline std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(Rng::derive(seed, fnv1a("order"), static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(j)]);
    }
    return order;
}

}  // namespace detail

// Self-supervised encoder warm-up: the feature extractor and a small signed-
// distance head are fit jointly so that pixel-aligned descriptors become
// informative about where the surface sits. Scenes are visited in a fresh
// random order each epoch in groups of `batch_scenes`; each scene contributes
// one randomly chosen view, gradients accumulate across the group, and a
// single Adam step follows. Every draw inside a group comes from an rng
// seeded only by (run seed, epoch, group), so results are independent of
// scene loading order and reproducible run to run.
//
// The validation probe re-seeds identically every epoch and always scores
// view 0, so its trajectory measures learning, not sampling luck.
inline SdfPretrainResult pretrain_sdf(const CorpusIndex& index,
                                      const ExperimentConfig& cfg,
                                      const std::string& out_path,
                                      std::uint64_t seed) {
    std::vector<SceneData> train, val;
    for (const std::string& dir : index.scene_dirs("train"))
        train.push_back(load_scene_dir(dir));
    for (const std::string& dir : index.scene_dirs("val"))
        val.push_back(load_scene_dir(dir));
    GLVD_CHECK(!train.empty(), "sdf pretraining: empty train split");

    Rng init_rng(seed);
    FeatureNet fv(cfg, init_rng);
    SdfNet head(cfg, init_rng);
    std::vector<Parameter*> params;
    fv.collect(params);
    head.collect(params);

    const int n = static_cast<int>(train.size());
    const int batch = std::min(cfg.batch_scenes, n);
    const int epochs = cfg.sdf_epochs_warm + cfg.sdf_epochs_decay;

    auto validate = [&]() {
        NoGrad ng;
        Rng vrng(Rng::derive(seed, fnv1a("val")));
        double surf = 0.0;
        for (const SceneData& s : val)
            surf += sdf_losses(fv, head, s, 0, cfg.sdf_n_surface,
                               cfg.sdf_n_volume, cfg.eikonal_weight, vrng)
                        .surf.value();
        return val.empty() ? 0.0 : surf / static_cast<double>(val.size());
    };

    Adam opt;
    SdfPretrainResult result;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const std::vector<int> order = detail::epoch_order(n, seed, epoch);
        const double lr = lr_at_epoch(cfg.lr, epoch, cfg.sdf_epochs_warm,
                                      cfg.sdf_epochs_decay);
        double epoch_loss = 0.0;
        int groups = 0;
        for (int b0 = 0; b0 < n; b0 += batch, ++groups) {
            const int bn = std::min(batch, n - b0);
            const std::uint64_t batch_seed =
                Rng::derive(seed, fnv1a("sdf"),
                            static_cast<std::uint64_t>(epoch),
                            static_cast<std::uint64_t>(groups));
            Rng brng(batch_seed);
            Adam::zero_grads(params);
            double group_loss = 0.0;
            try {
                for (int i = 0; i < bn; ++i) {
                    const SceneData& s =
                        train[static_cast<std::size_t>(order[static_cast<std::size_t>(b0 + i)])];
                    const int view = static_cast<int>(
                        brng.index(s.images.size()));
                    Tensor loss =
                        scale(sdf_losses(fv, head, s, view, cfg.sdf_n_surface,
                                         cfg.sdf_n_volume, cfg.eikonal_weight,
                                         brng)
                                  .total,
                              1.0 / bn);
                    loss.backward();
                    group_loss += loss.value();
                }
            } catch (const Error& e) {
                fail("sdf pretraining aborted at epoch ", epoch,
                     " (batch seed ", batch_seed, "): ", e.what());
            }
            GLVD_CHECK(std::isfinite(group_loss),
                       "sdf pretraining aborted: non-finite loss at epoch ",
                       epoch, " (batch seed ", batch_seed, ")");
            opt.step(params, lr);
            epoch_loss += group_loss;
        }
        result.train_total.push_back(groups > 0 ? epoch_loss / groups : 0.0);
        result.val_surf.push_back(validate());
    }
    if (epochs == 0) result.val_surf.push_back(validate());

    if (!out_path.empty()) {
        save_params_file(out_path, params, cfg.fingerprint(),
                         {{"kind", "glvd.encoder"}, {"seed", seed}});
        result.checkpoint = out_path;
    }
    return result;
}

}  // namespace glvd
