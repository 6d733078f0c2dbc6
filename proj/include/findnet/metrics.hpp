#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "findnet/model.hpp"
#include "findnet/sample.hpp"

namespace findnet {
namespace metrics {

// All metrics are confined to the non-metal mask I: values at masked-out
// pixels never influence a score.

inline void check_mask(const Tensor& x, const Tensor& y, const Tensor& mask) {
    require_same_shape(x, y, "metric");
    require_same_shape(x, mask, "metric mask");
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask[i] != 0.0) return;
    throw EvalError("metric: empty mask");
}

inline double mae(const Tensor& x, const Tensor& y, const Tensor& mask) {
    check_mask(x, y, mask);
    double acc = 0.0, n = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i)
        if (mask[i] != 0.0) {
            acc += std::fabs(x[i] - y[i]);
            n += 1.0;
        }
    return acc / n;
}

inline double masked_mse(const Tensor& x, const Tensor& y, const Tensor& mask) {
    check_mask(x, y, mask);
    double acc = 0.0, n = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i)
        if (mask[i] != 0.0) {
            acc += (x[i] - y[i]) * (x[i] - y[i]);
            n += 1.0;
        }
    return acc / n;
}

constexpr double kPsnrCapDb = 100.0;

// 10*log10(peak^2 / masked MSE), capped at 100 dB (zero error hits the cap).
inline double psnr(const Tensor& x, const Tensor& y, const Tensor& mask, double peak) {
    if (peak <= 0.0) throw ContractError("psnr: peak must be positive");
    const double mse = masked_mse(x, y, mask);
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

namespace detail {
inline std::vector<double> gaussian_window_11(double sigma = 1.5) {
    std::vector<double> w(121);
    double total = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5.0, dx = j - 5.0;
            w[static_cast<size_t>(i * 11 + j)] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            total += w[static_cast<size_t>(i * 11 + j)];
        }
    for (double& v : w) v /= total;
    return w;
}

inline Tensor squeeze2d(const Tensor& t) {
    if (t.rank() == 3 && t.extent(0) == 1) return t.reshaped({t.extent(1), t.extent(2)});
    if (t.rank() == 2) return t;
    throw DimError("expected [H,W] or [1,H,W], got " + shape_str(t.shape()));
}
}  // namespace detail

// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5),
// C1 = (0.01*peak)^2, C2 = (0.03*peak)^2. Both images are I-masked before
// windowing (so masked-out pixel values can never leak into a window) and
// the SSIM map is computed where the window fits entirely inside the image,
// averaged over pixels with I==1.
inline double ssim(const Tensor& x_in, const Tensor& y_in, const Tensor& mask_in, double peak = 1.0) {
    Tensor x = detail::squeeze2d(x_in), y = detail::squeeze2d(y_in), mask = detail::squeeze2d(mask_in);
    check_mask(x, y, mask);
    for (int64_t i = 0; i < x.numel(); ++i) {
        x[i] *= mask[i];
        y[i] *= mask[i];
    }
    const int64_t h = x.extent(0), w = x.extent(1);
    if (h < 11 || w < 11) throw EvalError("ssim: images must be at least 11x11");
    const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
    static const std::vector<double> win = detail::gaussian_window_11();

    double acc = 0.0, n = 0.0;
    for (int64_t r = 5; r < h - 5; ++r)
        for (int64_t c = 5; c < w - 5; ++c) {
            if (mask.at(r, c) == 0.0) continue;
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int64_t i = 0; i < 11; ++i)
                for (int64_t j = 0; j < 11; ++j) {
                    const double wgt = win[static_cast<size_t>(i * 11 + j)];
                    const double xv = x.at(r + i - 5, c + j - 5), yv = y.at(r + i - 5, c + j - 5);
                    mx += wgt * xv;
                    my += wgt * yv;
                    sxx += wgt * xv * xv;
                    syy += wgt * yv * yv;
                    sxy += wgt * xv * yv;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
            const double val = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                               ((mx * mx + my * my + c1) * (vx + vy + c2));
            acc += val;
            n += 1.0;
        }
    if (n == 0.0) throw EvalError("ssim: mask empty on the interior region");
    return acc / n;
}

// ---------------------------------------------------------------------------
// Grouped evaluation reports
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string id;
    SizeClass size_class = SizeClass::small;
    double mae = 0, ssim = 0, psnr = 0;
};

struct GroupStats {
    double mae = 0, ssim = 0, psnr = 0;
    int64_t n = 0;
};

struct MetricsReport {
    double peak = 1.0;
    std::vector<MetricRow> rows;
    std::map<std::string, GroupStats> groups;  // small/medium/large + "average"
};

inline void finalize_groups(MetricsReport& rep) {
    rep.groups.clear();
    for (const MetricRow& r : rep.rows) {
        for (const char* key : {to_string(r.size_class), "average"}) {
            GroupStats& g = rep.groups[key];
            g.mae += r.mae;
            g.ssim += r.ssim;
            g.psnr += r.psnr;
            g.n += 1;
        }
    }
    for (auto& [_, g] : rep.groups) {
        g.mae /= static_cast<double>(g.n);
        g.ssim /= static_cast<double>(g.n);
        g.psnr /= static_cast<double>(g.n);
    }
}

using Predictor = std::function<Tensor(const CTSample&)>;

// Runs the predictor over a labeled split and aggregates masked metrics by
// metal-size class. peak defaults to the max over the split's ground truth.
inline MetricsReport evaluate_with(const Predictor& predict, const std::vector<CTSample>& split,
                                   double peak = 0.0) {
    if (split.empty()) throw EvalError("evaluate: empty split");
    MetricsReport rep;
    if (peak <= 0.0) {
        for (const CTSample& s : split) peak = std::max(peak, max_abs(s.X_gt));
        if (peak <= 0.0) peak = 1.0;
    }
    rep.peak = peak;
    for (const CTSample& s : split) {
        Tensor pred = predict(s);
        MetricRow row;
        row.id = s.id;
        row.size_class = s.size_class;
        row.mae = mae(pred, s.X_gt, s.I);
        row.ssim = ssim(pred, s.X_gt, s.I, peak);
        row.psnr = psnr(pred, s.X_gt, s.I, peak);
        rep.rows.push_back(std::move(row));
    }
    finalize_groups(rep);
    return rep;
}

// Final-stage model output as the prediction.
inline MetricsReport evaluate(model::FindNetParams& params, const std::vector<CTSample>& split,
                              double peak = 0.0) {
    return evaluate_with(
        [&params](const CTSample& s) {
            Tape t;
            model::StageTrace tr = model::findnet_forward(t, s, params, Mode::infer);
            return tr.x(tr.n_stages());
        },
        split, peak);
}

// percent improvement vs a baseline: MAE improves downward, SSIM/PSNR upward
inline double impr_mae(double baseline, double value) { return 100.0 * (baseline - value) / baseline; }
inline double impr_up(double baseline, double value) { return 100.0 * (value - baseline) / baseline; }

// ---------------------------------------------------------------------------
// CSV emission / parsing
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

inline std::string report_csv(const MetricsReport& rep) {
    std::ostringstream os;
    os << "# peak=" << detail::fmt(rep.peak) << "\n";
    os << "id,size_class,mae,ssim,psnr\n";
    for (const MetricRow& r : rep.rows)
        os << r.id << "," << to_string(r.size_class) << "," << detail::fmt(r.mae) << ","
           << detail::fmt(r.ssim) << "," << detail::fmt(r.psnr) << "\n";
    return os.str();
}

inline std::string summary_csv(const MetricsReport& rep, const MetricsReport* baseline = nullptr) {
    std::ostringstream os;
    os << "# peak=" << detail::fmt(rep.peak) << "\n";
    os << "group,mae,ssim,psnr,mae_impr_pct,ssim_impr_pct,psnr_impr_pct\n";
    for (const char* key : {"large", "medium", "small", "average"}) {
        auto it = rep.groups.find(key);
        if (it == rep.groups.end()) continue;
        const GroupStats& g = it->second;
        os << key << "," << detail::fmt(g.mae) << "," << detail::fmt(g.ssim) << "," << detail::fmt(g.psnr);
        if (baseline && baseline->groups.count(key)) {
            const GroupStats& b = baseline->groups.at(key);
            os << "," << detail::fmt(impr_mae(b.mae, g.mae)) << "," << detail::fmt(impr_up(b.ssim, g.ssim))
               << "," << detail::fmt(impr_up(b.psnr, g.psnr));
        } else {
            os << ",,,";
        }
        os << "\n";
    }
    return os.str();
}

// Accepts either the per-sample or the summary CSV and rebuilds group stats.
inline MetricsReport report_from_csv(const std::string& text) {
    MetricsReport rep;
    std::istringstream is(text);
    std::string line;
    bool per_sample = false, header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto p = line.find("peak=");
            if (p != std::string::npos) rep.peak = std::stod(line.substr(p + 5));
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!header_seen) {
            header_seen = true;
            per_sample = !cells.empty() && cells[0] == "id";
            if (!per_sample && (cells.empty() || cells[0] != "group"))
                throw DataError("metrics CSV: unrecognized header '" + line + "'");
            continue;
        }
        if (per_sample) {
            if (cells.size() < 5) throw DataError("metrics CSV: malformed row '" + line + "'");
            MetricRow r;
            r.id = cells[0];
            r.size_class = size_class_from_string(cells[1]);
            r.mae = std::stod(cells[2]);
            r.ssim = std::stod(cells[3]);
            r.psnr = std::stod(cells[4]);
            rep.rows.push_back(std::move(r));
        } else {
            if (cells.size() < 4) throw DataError("metrics CSV: malformed row '" + line + "'");
            GroupStats g;
            g.mae = std::stod(cells[1]);
            g.ssim = std::stod(cells[2]);
            g.psnr = std::stod(cells[3]);
            g.n = 1;
            rep.groups[cells[0]] = g;
        }
    }
    if (per_sample) finalize_groups(rep);
    return rep;
}

}  // namespace metrics
}  // namespace findnet
