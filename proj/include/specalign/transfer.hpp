#pragma once

// Positive and negative transfer on peaks tasks. A network is trained on the
// source task; its hidden representation (before and after training) and the
// raw inputs are then compared on the source, related and unrelated labels,
// both through alignment curves and through linear models fitted on a small
// target sample.

#include <array>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "specalign/alignment.hpp"
#include "specalign/gd_dynamics.hpp"
#include "specalign/nn.hpp"
#include "specalign/peaks.hpp"
#include "specalign/stats.hpp"

namespace specalign {

enum class RepKind { original = 0, init = 1, trained = 2 };
enum class LabelKind { source = 0, related = 1, unrelated = 2 };

inline constexpr std::array<RepKind, 3> kRepKinds{RepKind::original, RepKind::init, RepKind::trained};
inline constexpr std::array<LabelKind, 3> kLabelKinds{LabelKind::source, LabelKind::related, LabelKind::unrelated};

inline const char* to_string(RepKind r) {
    switch (r) {
    case RepKind::original: return "original";
    case RepKind::init: return "init";
    case RepKind::trained: return "trained";
    }
    return "?";
}

inline const char* to_string(LabelKind l) {
    switch (l) {
    case LabelKind::source: return "source";
    case LabelKind::related: return "related";
    case LabelKind::unrelated: return "unrelated";
    }
    return "?";
}

inline std::size_t idx(RepKind r) { return static_cast<std::size_t>(r); }
inline std::size_t idx(LabelKind l) { return static_cast<std::size_t>(l); }

struct TransferConfig {
    Eigen::Index n_train_source = 10000;
    Eigen::Index n_train_target = 100;
    Eigen::Index n_test = 1000;
    int depth = 1; // hidden layers; the final one is transferred
    int width = 60;
    Activation activation = Activation::relu;
    TrainConfig train{Optimizer::adam, 0.001, 64, 1000, 0, true, 1e-5, 20};

    // Linear models on the target tasks minimise the mean squared error
    // with plain gradient descent from w = 0.
    long target_iters = 1000;
    long record_every = 10;
    std::vector<double> step_sizes{0.01, 0.1, 1.0};
    std::vector<double> loss_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

// Per-seed streams are derived from the seed so datasets never overlap.
inline std::uint64_t test_seed(std::uint64_t seed) { return seed + 0x9E3779B97F4A7C15ULL; }
inline std::uint64_t subsample_seed(std::uint64_t seed) { return seed ^ 0xC2B2AE3D27D4EB4FULL; }

struct LinearRun {
    double step = 0.0;
    std::vector<long> iters;
    std::vector<double> train_mse;
    std::vector<double> test_mse;
    std::vector<double> weight_norm;
    std::vector<std::optional<double>> weight_at_fraction; // per TransferConfig::loss_fractions
    std::vector<double> diverged_steps;

    double final_train() const { return train_mse.back(); }
    double final_test() const { return test_mse.back(); }
};

struct SeedResult {
    std::uint64_t seed = 0;
    TaskTriple triple;
    std::vector<double> source_history;
    double source_initial_loss = 0.0;
    // curves[rep][label] on the full source training inputs
    std::array<std::array<AlignmentCurve, 3>, 3> curves;
    std::array<Vec, 3> spectra;
    // 25/50/75% quantiles of the pooled spectra of the three representations
    std::array<double, 3> tau_quartiles{};
    // targets[0] = related, targets[1] = unrelated; inner index is RepKind
    std::array<std::array<LinearRun, 3>, 2> targets;

    const LinearRun& target(LabelKind label, RepKind rep) const {
        return targets[label == LabelKind::related ? 0 : 1][idx(rep)];
    }
    double alignment(RepKind rep, LabelKind label, double tau) const { return curves[idx(rep)][idx(label)].at(tau); }
    double median_tau() const { return tau_quartiles[1]; }
};

struct ExperimentReport {
    TransferConfig config;
    std::vector<SeedResult> seeds;
};

/// Mean-squared-error gradient descent on (phi, y) tracked on a test set.
/// Throws Diverged if the training loss stops being finite or rises for
/// ten consecutive records.
inline LinearRun fit_linear_gd(const Mat& phi, const Vec& y, const Mat& phi_test, const Vec& y_test,
                               double step, long iters, long record_every) {
    const double n = static_cast<double>(phi.rows());
    const double nt = static_cast<double>(phi_test.rows());
    LinearRun run;
    run.step = step;
    Vec w = Vec::Zero(phi.cols());
    int rising = 0;
    auto record = [&](long t) {
        const double tr = (phi * w - y).squaredNorm() / n;
        if (!std::isfinite(tr)) throw Diverged("linear model loss is not finite", t);
        if (!run.train_mse.empty() && tr > run.train_mse.back()) {
            if (++rising >= 10) throw Diverged("linear model loss rose for 10 consecutive records", t);
        } else {
            rising = 0;
        }
        run.iters.push_back(t);
        run.train_mse.push_back(tr);
        run.test_mse.push_back((phi_test * w - y_test).squaredNorm() / nt);
        run.weight_norm.push_back(w.norm());
    };
    record(0);
    for (long t = 1; t <= iters; ++t) {
        w -= (2.0 * step / n) * (phi.transpose() * (phi * w - y));
        if (t % record_every == 0 || t == iters) record(t);
    }
    return run;
}

/// Runs every step size, keeps the one with the lowest final training
/// loss, and fills in weight norms at the configured loss reductions.
inline LinearRun sweep_linear_gd(const Mat& phi, const Vec& y, const Mat& phi_test, const Vec& y_test,
                                 const TransferConfig& cfg) {
    std::optional<LinearRun> best;
    std::vector<double> diverged;
    for (double step : cfg.step_sizes) {
        try {
            LinearRun run = fit_linear_gd(phi, y, phi_test, y_test, step, cfg.target_iters, 1);
            if (!best || run.final_train() < best->final_train()) best = std::move(run);
        } catch (const Diverged&) {
            diverged.push_back(step);
        }
    }
    if (!best) throw Diverged("every step size diverged on the target task", 0);

    // Weight norms are read off the every-step trajectory, then the curves
    // are thinned to the recording cadence.
    TrajectoryReport traj;
    const double n = static_cast<double>(phi.rows());
    for (std::size_t i = 0; i < best->iters.size(); ++i) {
        traj.iters.push_back(best->iters[i]);
        traj.train_loss.push_back(best->train_mse[i] * n);
        traj.weight_norm.push_back(best->weight_norm[i]);
        traj.pred_dist.push_back(0.0);
    }
    best->weight_at_fraction = weight_norm_at_loss(traj, irreducible_loss(thin_svd(phi), y), cfg.loss_fractions);

    LinearRun thin;
    thin.step = best->step;
    thin.weight_at_fraction = best->weight_at_fraction;
    thin.diverged_steps = diverged;
    for (std::size_t i = 0; i < best->iters.size(); ++i) {
        const long t = best->iters[i];
        if (t % cfg.record_every == 0 || i + 1 == best->iters.size()) {
            thin.iters.push_back(t);
            thin.train_mse.push_back(best->train_mse[i]);
            thin.test_mse.push_back(best->test_mse[i]);
            thin.weight_norm.push_back(best->weight_norm[i]);
        }
    }
    return thin;
}

inline Mat representation(RepKind kind, const MlpModel& init, const MlpModel& trained, const Mat& x, int layer) {
    switch (kind) {
    case RepKind::original: return normalize_rows(with_bias_column(x));
    case RepKind::init: return normalize_rows(hidden_representation(init, x, layer));
    case RepKind::trained: return normalize_rows(hidden_representation(trained, x, layer));
    }
    return {};
}

inline SeedResult run_transfer_seed(const TaskTriple& triple, std::uint64_t seed, const TransferConfig& cfg) {
    SeedResult out;
    out.seed = seed;
    out.triple = triple;

    const Mat latent = sample_latents(cfg.n_train_source, seed);
    const Mat x = encode_inputs(latent);
    const Mat latent_test = sample_latents(cfg.n_test, test_seed(seed));
    const Mat x_test = encode_inputs(latent_test);
    const std::array<PeaksTask, 3> tasks{triple.source, triple.related, triple.unrelated};
    std::array<Vec, 3> labels;
    for (std::size_t l = 0; l < 3; ++l) labels[l] = task_labels(tasks[l], latent);

    MlpSpec spec;
    spec.layer_widths.assign(static_cast<std::size_t>(cfg.depth) + 2, cfg.width);
    spec.layer_widths.front() = kPeaksFeatures;
    spec.layer_widths.back() = 1;
    spec.activation = cfg.activation;
    spec.init_seed = seed;
    const MlpModel init = init_model(spec);

    TrainConfig tc = cfg.train;
    tc.shuffle_seed = seed;
    const Dataset source{x, labels[0]};
    out.source_initial_loss = evaluate_loss(init, source);
    TrainResult trained = train(init, source, tc);
    out.source_history = std::move(trained.history);

    std::vector<double> pooled;
    std::array<Mat, 3> reps;
    for (RepKind r : kRepKinds) {
        reps[idx(r)] = representation(r, init, trained.model, x, cfg.depth);
        const SvdResult svd = thin_svd(reps[idx(r)]);
        out.spectra[idx(r)] = svd.sigma;
        pooled.insert(pooled.end(), svd.sigma.data(), svd.sigma.data() + svd.sigma.size());
        for (LabelKind l : kLabelKinds) out.curves[idx(r)][idx(l)] = alignment_curve(svd, labels[idx(l)]);
    }
    out.tau_quartiles = {stats::quantile(pooled, 0.25), stats::quantile(pooled, 0.5), stats::quantile(pooled, 0.75)};

    // Target training rows: a seeded subset of the source inputs.
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(cfg.n_train_source));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::mt19937_64 rng(subsample_seed(seed));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<std::size_t>(std::min(cfg.n_train_target, cfg.n_train_source)));

    for (std::size_t t = 0; t < 2; ++t) {
        const PeaksTask& task = t == 0 ? triple.related : triple.unrelated;
        const Vec& y_all = labels[t + 1];
        const Vec y_test = task_labels(task, latent_test);
        Vec y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = y_all(rows[i]);
        for (RepKind r : kRepKinds) {
            const Mat& full = reps[idx(r)];
            Mat phi(static_cast<Eigen::Index>(rows.size()), full.cols());
            for (std::size_t i = 0; i < rows.size(); ++i) phi.row(static_cast<Eigen::Index>(i)) = full.row(rows[i]);
            const Mat phi_test = representation(r, init, trained.model, x_test, cfg.depth);
            out.targets[t][idx(r)] = sweep_linear_gd(phi, y, phi_test, y_test, cfg);
        }
    }
    return out;
}

/// Runs every seed (optionally on `jobs` worker threads). Results are stored
/// by seed position, so the report does not depend on scheduling. A failure
/// is rethrown with the seed that caused it.
inline ExperimentReport transfer_experiment(const TransferConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                            int jobs = 1) {
    if (cfg.n_train_source < 1 || cfg.n_train_target < 1 || cfg.n_test < 1) {
        throw InvalidInput("transfer_experiment: dataset sizes must be >= 1");
    }
    if (cfg.depth < 1 || cfg.width < 1) throw InvalidInput("transfer_experiment: depth and width must be >= 1");
    ExperimentReport report;
    report.config = cfg;
    report.seeds.resize(seeds.size());

    std::vector<std::exception_ptr> errors(seeds.size());
    auto run_one = [&](std::size_t i) {
        try {
            report.seeds[i] = run_transfer_seed(make_task_triple(seeds[i]), seeds[i], cfg);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
    } else {
        std::mutex mu;
        std::size_t next = 0;
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) {
            pool.emplace_back([&] {
                while (true) {
                    std::size_t i;
                    {
                        std::lock_guard lock(mu);
                        if (next >= seeds.size()) return;
                        i = next++;
                    }
                    run_one(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Diverged& e) {
            throw Diverged(std::string("seed ") + std::to_string(seeds[i]) + ": " + e.what(), e.step());
        } catch (const std::exception& e) {
            throw Error("seed " + std::to_string(seeds[i]) + ": " + e.what());
        }
    }
    return report;
}

// --- aggregation -----------------------------------------------------------------

/// Union of the curves' grids.
inline std::vector<double> common_grid(const std::vector<const AlignmentCurve*>& curves) {
    std::vector<double> grid;
    for (const auto* c : curves) grid.insert(grid.end(), c->thresholds.begin(), c->thresholds.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

/// Seed-averaged curve for one (rep, label) pair on `grid`.
inline AlignmentCurve mean_curve(const ExperimentReport& rep, RepKind r, LabelKind l, const std::vector<double>& grid) {
    AlignmentCurve out;
    out.thresholds = grid;
    for (double tau : grid) {
        double s = 0.0;
        for (const auto& seed : rep.seeds) s += seed.alignment(r, l, tau);
        out.values.push_back(s / static_cast<double>(rep.seeds.size()));
    }
    return out;
}

/// Fraction of the union grid on which the seed-mean curve of `a` is at
/// least that of `b` for the given labels.
inline double dominance_fraction(const ExperimentReport& rep, RepKind a, RepKind b, LabelKind l) {
    std::vector<const AlignmentCurve*> all;
    for (const auto& s : rep.seeds) {
        all.push_back(&s.curves[idx(a)][idx(l)]);
        all.push_back(&s.curves[idx(b)][idx(l)]);
    }
    const auto grid = common_grid(all);
    const AlignmentCurve ma = mean_curve(rep, a, l, grid);
    const AlignmentCurve mb = mean_curve(rep, b, l, grid);
    std::size_t wins = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (ma.values[i] >= mb.values[i]) ++wins;
    }
    return grid.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(grid.size());
}

/// Seed-averaged a - b difference curve on the union of all seeds' grids.
inline AlignmentCurve mean_diff_curve(const ExperimentReport& rep, RepKind a, RepKind b, LabelKind l) {
    std::vector<const AlignmentCurve*> all;
    for (const auto& s : rep.seeds) {
        all.push_back(&s.curves[idx(a)][idx(l)]);
        all.push_back(&s.curves[idx(b)][idx(l)]);
    }
    const auto grid = common_grid(all);
    return curve_diff(mean_curve(rep, a, l, grid), mean_curve(rep, b, l, grid));
}

struct SignTest {
    std::string name;
    int successes = 0;
    int trials = 0;
    int required = 0;

    bool passed() const { return successes >= required; }
};

/// Seeds needed for a 9-of-10 style majority: ceil(0.9 n).
inline int majority_bar(int n) { return (9 * n + 9) / 10; }

/// The orderings the transfer experiment is expected to show, counted per
/// seed. `required` scales the 10/10 and 9/10 bars to the number of seeds.
inline std::vector<SignTest> transfer_sign_tests(const ExperimentReport& rep) {
    const int n = static_cast<int>(rep.seeds.size());
    const int all = n;
    const int most = majority_bar(n);
    std::vector<SignTest> tests{
        {"source_alignment_trained_gt_init", 0, n, all},
        {"related_alignment_trained_gt_original", 0, n, most},
        {"unrelated_alignment_trained_lt_original", 0, n, most},
        {"related_test_mse_trained_lt_init", 0, n, most},
        {"unrelated_test_mse_trained_gt_original", 0, n, most},
        {"related_weight_norm50_trained_lt_init", 0, n, most},
    };
    std::size_t half = rep.config.loss_fractions.size();
    for (std::size_t i = 0; i < rep.config.loss_fractions.size(); ++i) {
        if (std::abs(rep.config.loss_fractions[i] - 0.5) < 1e-12) half = i;
    }
    for (const auto& s : rep.seeds) {
        const double tau = s.median_tau();
        tests[0].successes += s.alignment(RepKind::trained, LabelKind::source, tau) >
                              s.alignment(RepKind::init, LabelKind::source, tau);
        tests[1].successes += s.alignment(RepKind::trained, LabelKind::related, tau) >
                              s.alignment(RepKind::original, LabelKind::related, tau);
        tests[2].successes += s.alignment(RepKind::trained, LabelKind::unrelated, tau) <
                              s.alignment(RepKind::original, LabelKind::unrelated, tau);
        tests[3].successes += s.target(LabelKind::related, RepKind::trained).final_test() <
                              s.target(LabelKind::related, RepKind::init).final_test();
        tests[4].successes += s.target(LabelKind::unrelated, RepKind::trained).final_test() >
                              s.target(LabelKind::unrelated, RepKind::original).final_test();
        if (half < rep.config.loss_fractions.size()) {
            const auto& wt = s.target(LabelKind::related, RepKind::trained).weight_at_fraction[half];
            const auto& wi = s.target(LabelKind::related, RepKind::init).weight_at_fraction[half];
            tests[5].successes += wt && wi && *wt < *wi;
        }
    }
    return tests;
}

} // namespace specalign
