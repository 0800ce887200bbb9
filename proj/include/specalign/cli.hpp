#pragma once

// The `specalign` command line: align, gd, train, peaks and diff. Every
// command writes CSVs, a gnuplot script and a manifest into its output
// directory. The manifest doubles as a config file (--config) so a run can be
// repeated exactly; flags given on the command line override it.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specalign/alignment.hpp"
#include "specalign/csv_io.hpp"
#include "specalign/data_gen.hpp"
#include "specalign/gd_dynamics.hpp"
#include "specalign/nn.hpp"
#include "specalign/peaks.hpp"
#include "specalign/stats.hpp"
#include "specalign/transfer.hpp"

#ifndef SPECALIGN_VERSION
#define SPECALIGN_VERSION "0.0.0"
#endif

namespace specalign::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,      // I/O, parse and usage errors
    kInvalidInput = 2,
    kDiverged = 3,     // divergence, or a step size outside the stable range
    kSelfCheck = 4,    // outputs written but an internal check failed
};

inline constexpr const char* kOutputRootEnv = "SPECALIGN_OUTPUT_ROOT";

// --- shared option groups --------------------------------------------------------

struct InputOptions {
    std::string input;
    std::string generator;
    std::string label = "label";
    bool normalize = false;
    bool map_labels = false;
    std::string labeling = "major_axis";
    int n_per_class = CircleSpec{}.n_per_class;
    double spread = CircleSpec{}.angle_spread;
    std::uint64_t seed = 1;
    std::string task = "ABC";
    long n = 1000;
};

inline void add_input_options(CLI::App* app, InputOptions& o) {
    app->add_option("--input", o.input, "CSV file with a header line");
    app->add_option("--generator", o.generator, "Synthetic data instead of --input: circle | peaks");
    app->add_option("--label", o.label, "Label column of --input (name or 0-based index)");
    app->add_flag("--normalize", o.normalize, "Scale feature rows of --input to unit length");
    app->add_flag("--map-labels", o.map_labels, "Min-max map labels of --input onto [-1, 1]");
    app->add_option("--labeling", o.labeling, "circle: major_axis | minor_axis");
    app->add_option("--n-per-class", o.n_per_class, "circle: points per cluster");
    app->add_option("--spread", o.spread, "circle: half-width of angle noise (rad)");
    app->add_option("--seed", o.seed, "Generator seed");
    app->add_option("--task", o.task, "peaks: variables X,Y,Z as letters, e.g. ABC");
    app->add_option("--n", o.n, "peaks: number of samples");
}

inline PeaksTask parse_task(const std::string& s) {
    if (s.size() != 3) throw InvalidInput("task must be three letters from A-F, got '" + s + "'");
    PeaksTask t{s[0] - 'A', s[1] - 'A', s[2] - 'A'};
    if (!t.valid()) throw InvalidInput("task must be three distinct letters from A-F, got '" + s + "'");
    return t;
}

inline Dataset load_input(const InputOptions& o) {
    if (!o.input.empty() && !o.generator.empty()) throw InvalidInput("give either --input or --generator, not both");
    if (!o.input.empty()) {
        if (!fs::exists(o.input)) throw Error("input file '" + o.input + "' does not exist");
        return load_csv(o.input, o.label, {o.normalize, o.map_labels});
    }
    if (o.generator == "circle") {
        CircleSpec spec;
        spec.n_per_class = o.n_per_class;
        spec.angle_spread = o.spread;
        spec.seed = o.seed;
        if (o.labeling == "major_axis") spec.labeling = CircleLabeling::major_axis;
        else if (o.labeling == "minor_axis") spec.labeling = CircleLabeling::minor_axis;
        else throw InvalidInput("unknown labeling '" + o.labeling + "'");
        return circle_dataset(spec);
    }
    if (o.generator == "peaks") return make_dataset(parse_task(o.task), o.n, o.seed);
    if (o.generator.empty()) throw InvalidInput("no data: pass --input FILE or --generator NAME");
    throw InvalidInput("unknown generator '" + o.generator + "'");
}

inline std::string input_description(const InputOptions& o) {
    if (!o.input.empty()) return "input=" + o.input;
    return "generator=" + o.generator + " seed=" + std::to_string(o.seed);
}

// "0-9" or "0,3,5" or a mix of both.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        try {
            const auto dash = part.find('-');
            if (dash != std::string::npos && dash > 0) {
                const auto lo = std::stoull(part.substr(0, dash));
                const auto hi = std::stoull(part.substr(dash + 1));
                if (hi < lo) throw InvalidInput("seed range '" + part + "' is reversed");
                for (auto v = lo; v <= hi; ++v) out.push_back(v);
            } else {
                out.push_back(std::stoull(part));
            }
        } catch (const std::logic_error&) {
            throw InvalidInput("bad seed list '" + s + "'");
        }
    }
    if (out.empty()) throw InvalidInput("seed list is empty");
    return out;
}

inline std::vector<double> parse_real_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) out.push_back(detail::parse_real(detail::trim(part), 1));
    }
    return out;
}

// "9:1.0" or "4:0.9,49:0.435"; several mixes separated by ';'.
inline std::vector<std::vector<std::pair<Eigen::Index, double>>> parse_mixes(const std::string& s) {
    std::vector<std::vector<std::pair<Eigen::Index, double>>> mixes;
    std::stringstream outer(s);
    std::string mix;
    while (std::getline(outer, mix, ';')) {
        if (mix.empty()) continue;
        std::vector<std::pair<Eigen::Index, double>> terms;
        std::stringstream inner(mix);
        std::string term;
        while (std::getline(inner, term, ',')) {
            const auto colon = term.find(':');
            if (colon == std::string::npos) throw InvalidInput("mix term '" + term + "' must be index:weight");
            try {
                terms.emplace_back(std::stol(term.substr(0, colon)),
                                   detail::parse_real(detail::trim(term.substr(colon + 1)), 1));
            } catch (const std::logic_error&) {
                throw InvalidInput("bad mix term '" + term + "'");
            }
        }
        mixes.push_back(std::move(terms));
    }
    return mixes;
}

// --- run bookkeeping -------------------------------------------------------------

class Run {
public:
    Run(std::string command, CLI::App* app, const std::string& out_dir)
        : command_(std::move(command)), app_(app), start_(std::chrono::steady_clock::now()) {
        out_ = out_dir;
        if (out_.empty()) {
            const char* root = std::getenv(kOutputRootEnv);
            out_ = fs::path(root && *root ? root : "specalign-out") / command_;
        }
        fs::create_directories(out_);
    }

    const fs::path& dir() const { return out_; }

    std::string path(const std::string& name) {
        files_.push_back(name);
        const fs::path p = out_ / name;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        return p.string();
    }

    std::vector<std::string> comments(const std::string& seed_text) const {
        return {"command=" + command_ + " " + seed_text, std::string("specalign ") + SPECALIGN_VERSION};
    }

    void meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }

    void add_check(const std::string& name, bool ok) {
        meta("check." + name, ok ? "pass" : "FAIL");
        if (!ok) {
            failed_ = true;
            std::cerr << "self-check failed: " << name << '\n';
        }
    }

    bool failed() const { return failed_; }

    /// Writes manifest.txt via a temporary file and rename.
    void write_manifest() {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const fs::path final_path = out_ / "manifest.txt";
        const fs::path tmp = out_ / "manifest.txt.tmp";
        {
            std::ofstream m(tmp);
            m << "# specalign run manifest; usable as --config for the same command\n";
            m << "command=" << command_ << '\n';
            for (const CLI::Option* opt : app_->get_options()) {
                const std::string name = opt->get_single_name();
                if (opt->get_lnames().empty() || name == "help" || name == "config") continue;
                std::string value;
                if (opt->count() > 0) {
                    const auto& r = opt->results();
                    value = r.empty() ? "true" : r.back();
                } else if (opt->get_expected_min() == 0) {
                    value = "false"; // unset flag
                } else {
                    value = opt->get_default_str();
                }
                m << name << '=' << value << '\n';
            }
            m << "meta.version=" << SPECALIGN_VERSION << '\n';
            for (const auto& [k, v] : meta_) m << "meta." << k << '=' << v << '\n';
            std::ostringstream list;
            for (std::size_t i = 0; i < files_.size(); ++i) list << (i ? ";" : "") << files_[i];
            m << "meta.outputs=" << list.str() << '\n';
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", secs);
            m << "meta.wall_seconds=" << buf << '\n';
            if (!m) throw Error("failed writing manifest");
        }
        fs::rename(tmp, final_path);
    }

    int finish() {
        write_manifest();
        return failed_ ? kSelfCheck : kOk;
    }

private:
    std::string command_;
    CLI::App* app_;
    fs::path out_;
    std::vector<std::string> files_;
    std::vector<std::pair<std::string, std::string>> meta_;
    bool failed_ = false;
    std::chrono::steady_clock::time_point start_;
};

/// Applies a flat key=value file to `app`: keys not already given on the
/// command line are fed to the matching --key option. `command` must match
/// when present; meta.* keys are ignored.
inline void apply_config(CLI::App* app, const std::string& command, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto view = detail::trim(line);
        if (view.empty() || view.front() == '#') continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value in config", lineno);
        const std::string key(detail::trim(view.substr(0, eq)));
        const std::string value(detail::trim(view.substr(eq + 1)));
        if (key.rfind("meta.", 0) == 0) continue;
        if (key == "command") {
            if (value != command) throw ParseError("config is for command '" + value + "', not '" + command + "'", lineno);
            continue;
        }
        CLI::Option* opt = app->get_option_no_throw("--" + key);
        if (!opt) throw ParseError("unknown config key '" + key + "'", lineno);
        if (opt->count() > 0) continue; // command line wins
        if (value.empty()) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

inline std::string gnuplot_header(const std::string& title) {
    return "# gnuplot script; run: gnuplot -p " + title + "\nset datafile separator ','\nset key autotitle columnhead\n";
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
    if (!f) throw Error("failed writing '" + path + "'");
}

// --- align -------------------------------------------------------------------------

struct AlignOptions {
    InputOptions in;
    bool shuffle = false;
    std::uint64_t shuffle_seed = 0;
    std::string thresholds;
    int grid_points = 0;
    std::string out;
};

inline int run_align(const AlignOptions& o, CLI::App* app) {
    const Dataset data = load_input(o.in);
    data.validate();
    Run run("align", app, o.out);
    const SvdResult svd = thin_svd(data.x);

    std::optional<std::vector<double>> grid;
    if (!o.thresholds.empty()) {
        grid = parse_real_list(o.thresholds);
    } else if (o.grid_points > 1) {
        std::vector<double> g;
        const double top = 1.05 * svd.sigma_max();
        for (int i = 0; i < o.grid_points; ++i) g.push_back(top * i / (o.grid_points - 1));
        grid = g;
    }

    const auto comments = run.comments(input_description(o.in));
    auto emit = [&](const std::string& suffix, const Vec& y) {
        const AlignmentCurve curve = alignment_curve(svd, y, grid);
        write_curve_csv(run.path("curve" + suffix + ".csv"), comments, curve);
        write_projection_csv(run.path("projections" + suffix + ".csv"), comments, svd, y);
        return gini(project_labels(svd, y).cwiseAbs2());
    };

    const double g = emit("", data.y);
    const double mid = svd.rank >= 2 ? 0.5 * (svd.sigma(0) + svd.sigma(1)) : svd.sigma_max();
    CsvWriter summary(run.path("summary.csv"), comments,
                      {"labels", "rank", "sigma_max", "mid_threshold", "alignment_at_mid", "label_norm_sq", "gini"});
    summary.cell("original").cell(static_cast<long>(svd.rank)).cell(svd.sigma_max()).cell(mid)
        .cell(alignment_at(svd, data.y, mid)).cell(data.y.squaredNorm()).cell(g).end_row();
    if (o.shuffle) {
        const Vec ys = shuffle_labels(data.y, o.shuffle_seed);
        const double gs = emit("_shuffled", ys);
        summary.cell("shuffled").cell(static_cast<long>(svd.rank)).cell(svd.sigma_max()).cell(mid)
            .cell(alignment_at(svd, ys, mid)).cell(ys.squaredNorm()).cell(gs).end_row();
    }
    summary.close();

    std::string gp = gnuplot_header("align.gp");
    gp += "set xlabel 'threshold'\nset ylabel 'alignment'\nplot 'curve.csv' using 1:2 with steps title 'labels'";
    if (o.shuffle) gp += ", 'curve_shuffled.csv' using 1:2 with steps title 'shuffled labels'";
    gp += "\n";
    write_text(run.path("align.gp"), gp);
    return run.finish();
}

// --- gd ----------------------------------------------------------------------------

struct GdOptions {
    InputOptions in;
    double eta = 0.0; // 0: 0.5 / sigma_max^2
    long iters = 1000;
    long record_every = 1;
    std::string taus;  // empty: spectrum quartiles
    std::string mixes; // replace labels with singular-vector mixes
    std::string out;
};

// Relative difference, with `floor` guarding values that have decayed to
// rounding noise.
inline double relative_diff(double a, double b, double floor = 0.0) {
    const double scale = std::max({std::abs(a), std::abs(b), floor});
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline std::vector<double> spectrum_quartiles(const SvdResult& svd) {
    std::vector<double> s(svd.sigma.data(), svd.sigma.data() + svd.sigma.size());
    return {stats::quantile(s, 0.25), stats::quantile(s, 0.5), stats::quantile(s, 0.75), stats::quantile(s, 1.0)};
}

struct BoundCheck {
    double tau = 0.0;
    double delta = 0.0;
    double omega = 0.0;
    long bound = 0;
    std::optional<long> measured;

    bool satisfied() const { return measured && *measured <= bound; }
};

/// Measures how many plain GD steps remove 0.9 * Alignment(tau) of the loss
/// and compares with the alignment-driven bound.
inline BoundCheck check_iteration_bound(const Mat& phi, const SvdResult& svd, const Vec& y, double eta, double tau) {
    BoundCheck c;
    c.tau = tau;
    c.delta = alignment_at(svd, y, tau);
    c.omega = 0.9 * c.delta;
    if (c.delta <= 0.0) {
        c.measured = 0;
        return c;
    }
    c.bound = iteration_bound(c.delta, c.omega, eta, tau);
    c.measured = iterations_to_reduce(phi, y, eta, c.omega, c.bound + 1);
    return c;
}

inline int run_gd(const GdOptions& o, CLI::App* app) {
    const Dataset data = load_input(o.in);
    data.validate();
    const SvdResult svd = thin_svd(data.x);
    if (svd.rank == 0) throw InvalidInput("representation has rank 0");
    const double eta = o.eta > 0.0 ? o.eta : default_step_size(svd);
    if (!(eta * svd.sigma_max() * svd.sigma_max() < 1.0)) {
        throw Diverged("step size " + format_real(eta) + " is not below 1/sigma_max^2 = " +
                           format_real(1.0 / (svd.sigma_max() * svd.sigma_max())),
                       0);
    }
    if (o.iters < 1 || o.record_every < 1) throw InvalidInput("--iters and --record-every must be >= 1");

    Run run("gd", app, o.out);
    run.meta("eta", format_real(eta));
    const auto comments = run.comments(input_description(o.in));
    const std::vector<double> taus = o.taus.empty() ? spectrum_quartiles(svd) : parse_real_list(o.taus);

    std::vector<std::pair<std::string, Vec>> targets;
    if (o.mixes.empty()) {
        targets.emplace_back("labels", data.y);
    } else {
        const auto mixes = parse_mixes(o.mixes);
        for (std::size_t k = 0; k < mixes.size(); ++k) {
            targets.emplace_back("mix" + std::to_string(k), synthetic_singular_targets(svd, mixes[k]));
        }
    }

    double worst_rel = 0.0;
    bool bounds_ok = true;
    std::vector<TrajectoryReport> trajectories;
    for (const auto& [name, y] : targets) {
        const TrajectoryReport traj = iterative_gd(data.x, y, GdConfig{eta, o.iters, o.record_every});
        write_trajectory_csv(run.path("trajectory_" + name + ".csv"), comments, traj);

        CsvWriter cmp(run.path("closed_form_" + name + ".csv"), comments,
                      {"iter", "pred_dist_iterative", "pred_dist_closed", "loss_iterative", "loss_closed", "max_rel_diff"});
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const auto cf = closed_form_trajectory(svd, y, eta, traj.iters[i]);
            const double floor = 1e-12 * y.squaredNorm();
            const double rel = std::max(relative_diff(traj.pred_dist[i], cf.pred_dist, std::sqrt(floor)),
                                        relative_diff(traj.train_loss[i], cf.train_loss, floor));
            worst_rel = std::max(worst_rel, rel);
            cmp.cell(traj.iters[i]).cell(traj.pred_dist[i]).cell(cf.pred_dist).cell(traj.train_loss[i])
                .cell(cf.train_loss).cell(rel).end_row();
        }
        cmp.close();

        CsvWriter bounds(run.path("bounds_" + name + ".csv"), comments,
                         {"tau", "delta", "omega", "bound", "measured", "satisfied"});
        for (double tau : taus) {
            const BoundCheck c = check_iteration_bound(data.x, svd, y, eta, tau);
            bounds_ok = bounds_ok && c.satisfied();
            bounds.cell(c.tau).cell(c.delta).cell(c.omega).cell(c.bound);
            if (c.measured) bounds.cell(*c.measured); else bounds.cell("");
            bounds.cell(c.satisfied()).end_row();
        }
        bounds.close();

        const double median_tau = spectrum_quartiles(svd)[1];
        write_phase_csv(run.path("phase_" + name + ".csv"), comments, phase_breakdown(svd, y, median_tau));
        write_curve_csv(run.path("curve_" + name + ".csv"), comments, alignment_curve(svd, y));
        trajectories.push_back(traj);
    }

    if (targets.size() >= 2) {
        // Learning curves of the first two targets side by side, with the
        // first record where their order flips.
        const auto& a = trajectories[0];
        const auto& b = trajectories[1];
        CsvWriter cr(run.path("crossing.csv"), comments, {"iter", "loss_" + targets[0].first, "loss_" + targets[1].first});
        for (std::size_t i = 0; i < a.size(); ++i) cr.cell(a.iters[i]).cell(a.train_loss[i]).cell(b.train_loss[i]).end_row();
        cr.close();
    }

    run.meta("max_rel_diff", format_real(worst_rel));
    run.add_check("closed_form_matches_iterative", worst_rel < 1e-8);
    run.add_check("iteration_bounds_satisfied", bounds_ok);

    std::string gp = gnuplot_header("gd.gp");
    gp += "set logscale y\nset xlabel 'iteration'\nset ylabel 'training loss'\nplot ";
    for (std::size_t k = 0; k < targets.size(); ++k) {
        gp += (k ? ", " : "") + std::string("'trajectory_") + targets[k].first + ".csv' using 1:3 with lines title '" +
              targets[k].first + "'";
    }
    gp += "\n";
    write_text(run.path("gd.gp"), gp);
    return run.finish();
}

// --- train -------------------------------------------------------------------------

struct TrainOptions {
    InputOptions in;
    std::string widths;
    int depth = 1;
    int width = 64;
    std::string activation = "relu";
    std::string loss = "mse";
    std::uint64_t init_seed = 0;
    double rbf_bandwidth = 1.0;
    std::string optimizer = "adam";
    double lr = 0.001;
    int batch = 64;
    int epochs = 100;
    std::uint64_t shuffle_seed = 0;
    bool until_convergence = false;
    std::string out;
};

inline int run_train(const TrainOptions& o, CLI::App* app) {
    const Dataset data = load_input(o.in);
    data.validate();

    MlpSpec spec;
    if (!o.widths.empty()) {
        spec.layer_widths.clear();
        for (double w : parse_real_list(o.widths)) spec.layer_widths.push_back(static_cast<int>(w));
    } else {
        spec.layer_widths.assign(static_cast<std::size_t>(std::max(o.depth, 0)) + 2, o.width);
        spec.layer_widths.front() = static_cast<int>(data.features());
        spec.layer_widths.back() = 1;
    }
    spec.activation = parse_activation(o.activation);
    spec.loss = parse_loss(o.loss);
    spec.init_seed = o.init_seed;
    spec.rbf_bandwidth = o.rbf_bandwidth;
    MlpModel model = init_model(spec);
    if (model.layers.front().act == Activation::rbf_layer) attach_rbf_centers(model, data.x, spec.init_seed);

    TrainConfig tc;
    tc.optimizer = parse_optimizer(o.optimizer);
    tc.lr = o.lr;
    tc.batch_size = o.batch;
    tc.epochs = o.epochs;
    tc.shuffle_seed = o.shuffle_seed;
    tc.until_convergence = o.until_convergence;

    Run run("train", app, o.out);
    const auto comments = run.comments(input_description(o.in) + " init_seed=" + std::to_string(o.init_seed) +
                                       " shuffle_seed=" + std::to_string(o.shuffle_seed));

    auto write_curves = [&](const MlpModel& m, const std::string& phase) {
        const int hidden = m.spec.hidden_layers();
        for (int layer = 0; layer <= hidden; ++layer) {
            const Mat rep = layer == 0 ? normalize_rows(with_bias_column(data.x))
                                       : normalize_rows(hidden_representation(m, data.x, layer));
            write_curve_csv(run.path("curve_" + phase + "_layer" + std::to_string(layer) + ".csv"), comments,
                            alignment_curve(thin_svd(rep), data.y));
        }
    };

    const double initial = evaluate_loss(model, data);
    write_curves(model, "before");
    const TrainResult result = train(model, data, tc);
    write_curves(result.model, "after");

    CsvWriter hist(run.path("loss_history.csv"), comments, {"epoch", "loss"});
    hist.cell(0L).cell(initial).end_row();
    for (std::size_t e = 0; e < result.history.size(); ++e) hist.cell(static_cast<long>(e + 1)).cell(result.history[e]).end_row();
    hist.close();

    const std::string ckpt = run.path("checkpoint.txt");
    save_checkpoint(result.model, ckpt);
    const MlpModel reloaded = load_checkpoint(ckpt);
    const bool same = reloaded.params == result.model.params &&
                      forward(reloaded, data.x) == forward(result.model, data.x);
    run.add_check("checkpoint_roundtrip", same);
    run.meta("epochs_run", std::to_string(result.history.size()));
    run.meta("final_loss", format_real(result.history.empty() ? initial : result.history.back()));

    std::string gp = gnuplot_header("train.gp");
    gp += "set xlabel 'threshold'\nset ylabel 'alignment'\nplot ";
    for (int layer = 0; layer <= spec.hidden_layers(); ++layer) {
        const std::string l = std::to_string(layer);
        gp += (layer ? ", " : "") + std::string("'curve_before_layer") + l + ".csv' using 1:2 with steps dt 2 title 'layer " + l +
              " before', 'curve_after_layer" + l + ".csv' using 1:2 with steps title 'layer " + l + " after'";
    }
    gp += "\n";
    write_text(run.path("train.gp"), gp);
    return run.finish();
}

// --- peaks -------------------------------------------------------------------------

struct PeaksOptions {
    std::string seeds = "0-9";
    long n_source = 10000;
    long n_target = 100;
    long n_test = 1000;
    int depth = 1;
    int width = 60;
    int epochs = 1000;
    long target_iters = 1000;
    long record_every = 10;
    int jobs = 1;
    std::string out;
};

inline void write_peaks_report(const ExperimentReport& rep, Run& run) {
    const auto& cfg = rep.config;
    for (const auto& s : rep.seeds) {
        const std::string dir = "seed" + std::to_string(s.seed) + "/";
        const auto comments = run.comments("seed=" + std::to_string(s.seed) + " source=" + s.triple.source.name() +
                                           " related=" + s.triple.related.name() +
                                           " unrelated=" + s.triple.unrelated.name());
        for (RepKind r : kRepKinds) {
            for (LabelKind l : kLabelKinds) {
                write_curve_csv(run.path(dir + "curve_" + to_string(r) + "_" + to_string(l) + ".csv"), comments,
                                s.curves[idx(r)][idx(l)]);
            }
        }
        for (LabelKind l : kLabelKinds) {
            write_curve_csv(run.path(dir + "diff_trained_minus_init_" + std::string(to_string(l)) + ".csv"), comments,
                            curve_diff(s.curves[idx(RepKind::trained)][idx(l)], s.curves[idx(RepKind::init)][idx(l)]));
            write_curve_csv(run.path(dir + "diff_trained_minus_original_" + std::string(to_string(l)) + ".csv"), comments,
                            curve_diff(s.curves[idx(RepKind::trained)][idx(l)], s.curves[idx(RepKind::original)][idx(l)]));
        }
        CsvWriter hist(run.path(dir + "source_history.csv"), comments, {"epoch", "loss"});
        hist.cell(0L).cell(s.source_initial_loss).end_row();
        for (std::size_t e = 0; e < s.source_history.size(); ++e) hist.cell(static_cast<long>(e + 1)).cell(s.source_history[e]).end_row();
        hist.close();

        for (LabelKind task : {LabelKind::related, LabelKind::unrelated}) {
            for (RepKind r : kRepKinds) {
                const LinearRun& lr = s.target(task, r);
                const std::string stem = std::string(to_string(task)) + "_" + to_string(r);
                CsvWriter lc(run.path(dir + "learning_" + stem + ".csv"), comments,
                             {"iter", "train_mse", "test_mse", "weight_norm"});
                for (std::size_t i = 0; i < lr.iters.size(); ++i) {
                    lc.cell(lr.iters[i]).cell(lr.train_mse[i]).cell(lr.test_mse[i]).cell(lr.weight_norm[i]).end_row();
                }
                lc.close();
                CsvWriter wn(run.path(dir + "weights_" + stem + ".csv"), comments, {"loss_reduction", "weight_norm"});
                for (std::size_t k = 0; k < cfg.loss_fractions.size(); ++k) {
                    wn.cell(cfg.loss_fractions[k]).cell(lr.weight_at_fraction[k]).end_row();
                }
                wn.close();
                run.meta("step_winner.seed" + std::to_string(s.seed) + "." + stem, format_real(lr.step));
            }
        }
    }

    const auto comments = run.comments("seeds=" + std::to_string(rep.seeds.size()));

    // Bars: alignment at the quartiles of each seed's pooled spectrum.
    CsvWriter bars(run.path("alignment_bars.csv"), comments, {"labels", "representation", "quartile", "tau_mean", "mean", "stderr"});
    for (LabelKind l : kLabelKinds) {
        for (RepKind r : kRepKinds) {
            for (std::size_t q = 0; q < 3; ++q) {
                std::vector<double> vals, taus;
                for (const auto& s : rep.seeds) {
                    taus.push_back(s.tau_quartiles[q]);
                    vals.push_back(s.alignment(r, l, s.tau_quartiles[q]));
                }
                bars.cell(to_string(l)).cell(to_string(r)).cell(static_cast<long>(25 * (q + 1)))
                    .cell(stats::mean(taus)).cell(stats::mean(vals)).cell(stats::standard_error(vals)).end_row();
            }
        }
    }
    bars.close();

    for (LabelKind l : kLabelKinds) {
        for (RepKind base : {RepKind::init, RepKind::original}) {
            write_curve_csv(run.path("diff_mean_trained_minus_" + std::string(to_string(base)) + "_" + to_string(l) + ".csv"),
                            comments, mean_diff_curve(rep, RepKind::trained, base, l));
        }
    }

    for (LabelKind task : {LabelKind::related, LabelKind::unrelated}) {
        const std::string t = to_string(task);
        CsvWriter lc(run.path("learning_mean_" + t + ".csv"), comments,
                     {"iter", "representation", "train_mean", "train_stderr", "test_mean", "test_stderr"});
        for (RepKind r : kRepKinds) {
            const auto& iters = rep.seeds.front().target(task, r).iters;
            for (std::size_t i = 0; i < iters.size(); ++i) {
                std::vector<double> tr, te;
                for (const auto& s : rep.seeds) {
                    tr.push_back(s.target(task, r).train_mse[i]);
                    te.push_back(s.target(task, r).test_mse[i]);
                }
                lc.cell(iters[i]).cell(to_string(r)).cell(stats::mean(tr)).cell(stats::standard_error(tr))
                    .cell(stats::mean(te)).cell(stats::standard_error(te)).end_row();
            }
        }
        lc.close();

        CsvWriter wn(run.path("weights_mean_" + t + ".csv"), comments,
                     {"loss_reduction", "representation", "mean", "stderr", "seeds_reached"});
        for (RepKind r : kRepKinds) {
            for (std::size_t k = 0; k < cfg.loss_fractions.size(); ++k) {
                std::vector<double> v;
                for (const auto& s : rep.seeds) {
                    if (const auto& w = s.target(task, r).weight_at_fraction[k]) v.push_back(*w);
                }
                wn.cell(cfg.loss_fractions[k]).cell(to_string(r)).cell(stats::mean(v)).cell(stats::standard_error(v))
                    .cell(static_cast<long>(v.size())).end_row();
            }
        }
        wn.close();
    }

    CsvWriter st(run.path("sign_tests.csv"), comments, {"test", "successes", "trials", "required", "passed"});
    for (const auto& t : transfer_sign_tests(rep)) {
        st.cell(t.name).cell(t.successes).cell(t.trials).cell(t.required).cell(t.passed()).end_row();
    }
    st.close();

    std::string gp = gnuplot_header("peaks.gp");
    gp += "set multiplot layout 1,2\nset logscale y\nset xlabel 'iteration'\nset ylabel 'mse'\n";
    for (const char* t : {"related", "unrelated"}) {
        gp += "set title '" + std::string(t) + "'\nplot for [r in 'original init trained'] 'learning_mean_" + t +
              ".csv' using 1:(strcol(2) eq r ? $5 : NaN) with lines title r\n";
    }
    gp += "unset multiplot\n";
    write_text(run.path("peaks.gp"), gp);
}

inline int run_peaks(const PeaksOptions& o, CLI::App* app) {
    const auto seeds = parse_seed_list(o.seeds);
    TransferConfig cfg;
    cfg.n_train_source = o.n_source;
    cfg.n_train_target = o.n_target;
    cfg.n_test = o.n_test;
    cfg.depth = o.depth;
    cfg.width = o.width;
    cfg.train.epochs = o.epochs;
    cfg.target_iters = o.target_iters;
    cfg.record_every = o.record_every;
    if (o.record_every < 1 || o.target_iters < 1) throw InvalidInput("--target-iters and --record-every must be >= 1");

    Run run("peaks", app, o.out);
    const ExperimentReport rep = transfer_experiment(cfg, seeds, o.jobs);
    write_peaks_report(rep, run);
    for (const auto& s : rep.seeds) {
        run.meta("triple.seed" + std::to_string(s.seed),
                 s.triple.source.name() + " " + s.triple.related.name() + " " + s.triple.unrelated.name());
        run.add_check("source_loss_decreased.seed" + std::to_string(s.seed),
                      !s.source_history.empty() && s.source_history.back() < s.source_history.front());
    }
    return run.finish();
}

// --- diff --------------------------------------------------------------------------

struct DiffOptions {
    std::string a;
    std::string b;
    std::string rep_a;
    std::string rep_b;
    std::string labels;
    std::string label_column = "label";
    bool normalize = false;
    std::string out;
};

inline int run_diff(const DiffOptions& o, CLI::App* app) {
    AlignmentCurve ca, cb;
    const bool curves = !o.a.empty() || !o.b.empty();
    const bool reps = !o.rep_a.empty() || !o.rep_b.empty();
    if (curves == reps) throw InvalidInput("give either --a/--b curve files or --rep-a/--rep-b/--labels");
    for (const auto* p : {&o.a, &o.b, &o.rep_a, &o.rep_b, &o.labels}) {
        if (!p->empty() && !fs::exists(*p)) throw Error("input file '" + *p + "' does not exist");
    }

    Run run("diff", app, o.out);
    const auto comments = run.comments("seed=none");
    if (curves) {
        if (o.a.empty() || o.b.empty()) throw InvalidInput("both --a and --b are required");
        ca = read_curve_csv(o.a);
        cb = read_curve_csv(o.b);
    } else {
        if (o.rep_a.empty() || o.rep_b.empty() || o.labels.empty()) {
            throw InvalidInput("--rep-a, --rep-b and --labels are all required");
        }
        const NumericTable lt = read_numeric_csv(o.labels);
        const auto it = std::find(lt.header.begin(), lt.header.end(), o.label_column);
        if (it == lt.header.end()) throw ParseError("label column '" + o.label_column + "' not found", 1);
        const Vec y = lt.values.col(it - lt.header.begin());
        auto curve_for = [&](const std::string& path) {
            Mat phi = read_numeric_csv(path).values;
            if (o.normalize) phi = normalize_rows(phi);
            return alignment_curve(thin_svd(phi), y);
        };
        ca = curve_for(o.rep_a);
        cb = curve_for(o.rep_b);
        write_curve_csv(run.path("curve_a.csv"), comments, ca);
        write_curve_csv(run.path("curve_b.csv"), comments, cb);
    }
    write_curve_csv(run.path("diff.csv"), comments, curve_diff(ca, cb));
    write_text(run.path("diff.gp"), gnuplot_header("diff.gp") +
                                        "set xlabel 'threshold'\nset ylabel 'alignment difference'\n"
                                        "plot 'diff.csv' using 1:2 with steps title 'a - b'\n");
    return run.finish();
}

// --- entry point -----------------------------------------------------------------------

inline int main(int argc, char** argv) {
    CLI::App app{"specalign: representation alignment, gradient-descent dynamics and transfer experiments"};
    app.set_version_flag("--version", SPECALIGN_VERSION);
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::string config;
    auto add_common = [&](CLI::App* sub, std::string& out) {
        sub->add_option("--out", out, std::string("Output directory (default $") + kOutputRootEnv + "/<command>)");
        sub->add_option("--config", config, "Flat key=value file (a previous manifest works); flags override it");
    };

    AlignOptions align;
    auto* c_align = app.add_subcommand("align", "Alignment curve and label projections of a representation");
    add_input_options(c_align, align.in);
    c_align->add_flag("--shuffle", align.shuffle, "Also emit the curve for shuffled labels");
    c_align->add_option("--shuffle-seed", align.shuffle_seed, "Seed for --shuffle");
    c_align->add_option("--thresholds", align.thresholds, "Comma-separated ascending thresholds");
    c_align->add_option("--grid-points", align.grid_points, "Uniform grid on [0, 1.05 sigma_max] instead of the exact steps");
    add_common(c_align, align.out);

    GdOptions gd;
    auto* c_gd = app.add_subcommand("gd", "Iterative vs closed-form gradient descent and iteration bounds");
    add_input_options(c_gd, gd.in);
    c_gd->add_option("--eta", gd.eta, "Step size (default 0.5 / sigma_max^2)");
    c_gd->add_option("--iters", gd.iters, "Gradient descent iterations");
    c_gd->add_option("--record-every", gd.record_every, "Recording cadence");
    c_gd->add_option("--tau", gd.taus, "Comma-separated thresholds for the bound check (default spectrum quartiles)");
    c_gd->add_option("--mix", gd.mixes, "Singular-vector targets, e.g. '9:1;4:0.9,49:0.435' (0-based indices)");
    add_common(c_gd, gd.out);

    TrainOptions tr;
    auto* c_train = app.add_subcommand("train", "Train an MLP and compare layer alignment before and after");
    add_input_options(c_train, tr.in);
    c_train->add_option("--widths", tr.widths, "Layer widths input,hidden...,1 (overrides --depth/--width)");
    c_train->add_option("--depth", tr.depth, "Hidden layers");
    c_train->add_option("--width", tr.width, "Hidden layer width");
    c_train->add_option("--activation", tr.activation, "relu | tanh | prelu | leaky_relu | linear | rbf_layer");
    c_train->add_option("--loss", tr.loss, "mse | logistic");
    c_train->add_option("--init-seed", tr.init_seed, "Weight initialization seed");
    c_train->add_option("--rbf-bandwidth", tr.rbf_bandwidth, "Bandwidth of rbf units");
    c_train->add_option("--optimizer", tr.optimizer, "sgd | sgd_momentum | adam | rmsprop");
    c_train->add_option("--lr", tr.lr, "Learning rate");
    c_train->add_option("--batch", tr.batch, "Batch size");
    c_train->add_option("--epochs", tr.epochs, "Epoch cap");
    c_train->add_option("--shuffle-seed", tr.shuffle_seed, "Minibatch shuffling seed");
    c_train->add_flag("--until-convergence", tr.until_convergence, "Stop once the epoch loss plateaus");
    add_common(c_train, tr.out);

    PeaksOptions pk;
    auto* c_peaks = app.add_subcommand("peaks", "Peaks-function transfer experiment");
    c_peaks->add_option("--seeds", pk.seeds, "Seeds, e.g. 0-9 or 1,4,7");
    c_peaks->add_option("--n-source", pk.n_source, "Source training samples");
    c_peaks->add_option("--n-target", pk.n_target, "Target training samples");
    c_peaks->add_option("--n-test", pk.n_test, "Target test samples");
    c_peaks->add_option("--depth", pk.depth, "Hidden layers of the source network");
    c_peaks->add_option("--width", pk.width, "Hidden layer width");
    c_peaks->add_option("--epochs", pk.epochs, "Epoch cap for source training");
    c_peaks->add_option("--target-iters", pk.target_iters, "Gradient descent steps for target linear models");
    c_peaks->add_option("--record-every", pk.record_every, "Learning-curve cadence");
    c_peaks->add_option("--jobs", pk.jobs, "Worker threads across seeds (outputs do not depend on it)");
    add_common(c_peaks, pk.out);

    DiffOptions df;
    auto* c_diff = app.add_subcommand("diff", "Difference of two alignment curves");
    c_diff->add_option("--a", df.a, "Curve CSV (threshold,alignment)");
    c_diff->add_option("--b", df.b, "Curve CSV subtracted from --a");
    c_diff->add_option("--rep-a", df.rep_a, "Representation CSV (header + numeric rows)");
    c_diff->add_option("--rep-b", df.rep_b, "Second representation CSV");
    c_diff->add_option("--labels", df.labels, "CSV holding the label column");
    c_diff->add_option("--label-column", df.label_column, "Label column name in --labels");
    c_diff->add_flag("--normalize", df.normalize, "Scale representation rows to unit length");
    add_common(c_diff, df.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        for (auto* sub : app.get_subcommands()) {
            if (!config.empty()) apply_config(sub, sub->get_name(), config);
        }
        if (c_align->parsed()) return run_align(align, c_align);
        if (c_gd->parsed()) return run_gd(gd, c_gd);
        if (c_train->parsed()) return run_train(tr, c_train);
        if (c_peaks->parsed()) return run_peaks(pk, c_peaks);
        if (c_diff->parsed()) return run_diff(df, c_diff);
    } catch (const Diverged& e) {
        std::cerr << "error (diverged): " << e.what() << '\n';
        return kDiverged;
    } catch (const InvalidConfig& e) {
        std::cerr << "error (invalid config): " << e.what() << '\n';
        return kDiverged;
    } catch (const InvalidInput& e) {
        std::cerr << "error (invalid input): " << e.what() << '\n';
        return kInvalidInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}

} // namespace specalign::cli
