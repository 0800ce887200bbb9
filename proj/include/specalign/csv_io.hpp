#pragma once

// CSV output shared by every command. Each file opens with '#' comment lines
// naming the command and seed that produced it, then a one-line header.
// Reals are printed with 17 significant digits so reruns compare bytewise.

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "specalign/alignment.hpp"
#include "specalign/data_gen.hpp"
#include "specalign/errors.hpp"
#include "specalign/gd_dynamics.hpp"

namespace specalign {

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& comments,
              std::initializer_list<std::string> columns)
        : path_(path), out_(path) {
        if (!out_) throw Error("cannot write '" + path + "'");
        for (const auto& c : comments) out_ << "# " << c << '\n';
        bool first = true;
        for (const auto& c : columns) {
            out_ << (first ? "" : ",") << c;
            first = false;
        }
        out_ << '\n';
    }

    CsvWriter& cell(double v) { return raw(format_real(v)); }
    CsvWriter& cell(long v) { return raw(std::to_string(v)); }
    CsvWriter& cell(int v) { return raw(std::to_string(v)); }
    CsvWriter& cell(bool v) { return raw(v ? "true" : "false"); }
    CsvWriter& cell(const std::string& v) { return raw(v); }
    CsvWriter& cell(const char* v) { return raw(v); }
    CsvWriter& cell(const std::optional<double>& v) { return v ? cell(*v) : raw(""); }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

    void close() {
        out_.close();
        if (!out_) throw Error("failed writing '" + path_ + "'");
    }

    ~CsvWriter() = default;

private:
    CsvWriter& raw(const std::string& s) {
        out_ << (first_ ? "" : ",") << s;
        first_ = false;
        return *this;
    }

    std::string path_;
    std::ofstream out_;
    bool first_ = true;
};

inline void write_curve_csv(const std::string& path, const std::vector<std::string>& comments,
                            const AlignmentCurve& curve) {
    CsvWriter w(path, comments, {"threshold", "alignment"});
    for (std::size_t i = 0; i < curve.size(); ++i) {
        w.cell(curve.thresholds[i]).cell(curve.values[i]).end_row();
    }
    w.close();
}

/// Inverse of write_curve_csv (comment lines are skipped).
inline AlignmentCurve read_curve_csv(const std::string& path) {
    const NumericTable t = read_numeric_csv(path);
    if (t.header.size() != 2 || t.header[0] != "threshold" || t.header[1] != "alignment") {
        throw ParseError("expected header 'threshold,alignment' in '" + path + "'", 1);
    }
    AlignmentCurve c;
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
        c.thresholds.push_back(t.values(i, 0));
        c.values.push_back(t.values(i, 1));
    }
    validate_grid(c.thresholds);
    return c;
}

inline void write_trajectory_csv(const std::string& path, const std::vector<std::string>& comments,
                                 const TrajectoryReport& traj) {
    CsvWriter w(path, comments, {"iter", "pred_dist", "loss", "weight_norm"});
    for (std::size_t i = 0; i < traj.size(); ++i) {
        w.cell(traj.iters[i]).cell(traj.pred_dist[i]).cell(traj.train_loss[i]).cell(traj.weight_norm[i]).end_row();
    }
    w.close();
}

inline void write_phase_csv(const std::string& path, const std::vector<std::string>& comments,
                            const PhaseBreakdown& phase) {
    CsvWriter w(path, comments, {"index", "sigma", "loss_share", "required_weight", "is_fast"});
    for (std::size_t i = 0; i < phase.directions.size(); ++i) {
        const auto& d = phase.directions[i];
        w.cell(static_cast<long>(i + 1)).cell(d.sigma).cell(d.loss_share).cell(d.required_weight).cell(d.is_fast).end_row();
    }
    w.close();
}

/// index (1-based), sigma_i, (u_i^T y)^2 for every retained direction.
inline void write_projection_csv(const std::string& path, const std::vector<std::string>& comments,
                                 const SvdResult& svd, const Vec& y) {
    const Vec proj = project_labels(svd, y);
    CsvWriter w(path, comments, {"index", "sigma", "projection_sq"});
    for (Eigen::Index i = 0; i < svd.rank; ++i) {
        w.cell(static_cast<long>(i + 1)).cell(svd.sigma(i)).cell(proj(i) * proj(i)).end_row();
    }
    w.close();
}

} // namespace specalign
