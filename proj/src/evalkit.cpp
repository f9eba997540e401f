#include "degforge/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace degforge::evalkit {

double psnr(const Image& a, const Image& b, double cap) {
    require_same_shape(a, b, "psnr");
    double mse = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a.px[i]) - b.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return cap;
    return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> k(window);
    int half = window / 2;
    double sum = 0;
    for (int i = 0; i < window; ++i) {
        double d = i - half;
        k[i] = std::exp(-d * d / (2 * sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

}  // namespace

double ssim(const Image& a, const Image& b, int window, double k1, double k2) {
    require_same_shape(a, b, "ssim");
    if (a.h < window || a.w < window)
        throw std::invalid_argument("ssim: image smaller than window");
    const double c1 = k1 * k1, c2 = k2 * k2;
    const auto kern = gaussian_kernel(window, 1.5);
    const int half = window / 2;

    double total = 0;
    long count = 0;
    // valid region only (no padding)
    for (int c = 0; c < 3; ++c)
        for (int y = half; y < a.h - half; ++y)
            for (int x = half; x < a.w - half; ++x) {
                double ma = 0, mb = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        double wgt = kern[i] * kern[j];
                        ma += wgt * a.at(y + i - half, x + j - half, c);
                        mb += wgt * b.at(y + i - half, x + j - half, c);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        double wgt = kern[i] * kern[j];
                        double da = a.at(y + i - half, x + j - half, c) - ma;
                        double db = b.at(y + i - half, x + j - half, c) - mb;
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cov += wgt * da * db;
                    }
                double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                           ((ma * ma + mb * mb + c1) * (va + vb + c2));
                total += s;
                ++count;
            }
    return total / static_cast<double>(count);
}

std::vector<double> pixel_stat_features(const Image& img) {
    std::vector<double> f;
    f.reserve(8);
    for (int c = 0; c < 3; ++c) {
        double mean = 0;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) mean += img.at(y, x, c);
        mean /= static_cast<double>(img.h) * img.w;
        double var = 0;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                double d = img.at(y, x, c) - mean;
                var += d * d;
            }
        var /= static_cast<double>(img.h) * img.w;
        f.push_back(mean);
        f.push_back(std::sqrt(var));
    }
    // mean gradient magnitude (luminance)
    double grad = 0;
    long n = 0;
    auto lum = [&](int y, int x) {
        return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    };
    for (int y = 0; y + 1 < img.h; ++y)
        for (int x = 0; x + 1 < img.w; ++x) {
            double gx = lum(y, x + 1) - lum(y, x);
            double gy = lum(y + 1, x) - lum(y, x);
            grad += std::sqrt(gx * gx + gy * gy);
            ++n;
        }
    f.push_back(n ? grad / n : 0.0);
    double lmean = 0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) lmean += lum(y, x);
    f.push_back(lmean / (static_cast<double>(img.h) * img.w));
    return f;
}

FeatureSet feature_set_of(const std::vector<Image>& images, const std::string& label) {
    FeatureSet fs;
    fs.source_label = label;
    for (const auto& img : images) fs.rows.push_back(pixel_stat_features(img));
    return fs;
}

double frechet_distance(const FeatureSet& f1, const FeatureSet& f2) {
    if (f1.n() < 2 || f2.n() < 2)
        throw std::invalid_argument("frechet_distance: need N >= 2 per side");
    if (f1.dim() != f2.dim()) throw std::invalid_argument("frechet_distance: dim mismatch");
    const int d = static_cast<int>(f1.dim());

    auto moments = [&](const FeatureSet& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        const int n = static_cast<int>(f.n());
        Eigen::MatrixXd X(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = f.rows[i][j];
        mu = X.colwise().mean();
        Eigen::MatrixXd C = X.rowwise() - mu.transpose();
        cov = C.transpose() * C / static_cast<double>(n - 1);
    };
    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd s1, s2;
    moments(f1, mu1, s1);
    moments(f2, mu2, s2);

    // Tr((S1 S2)^{1/2}) = Tr((A S2 A)^{1/2}) with A = S1^{1/2}
    auto sqrt_psd = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        Eigen::VectorXd ev = es.eigenvalues();
        bool warned = false;
        for (int i = 0; i < ev.size(); ++i) {
            if (ev[i] < -1e-6 && !warned) {
                std::cerr << "frechet_distance: clipping negative eigenvalue " << ev[i]
                          << " (regularized)\n";
                warned = true;
            }
            ev[i] = std::sqrt(std::max(0.0, ev[i]));
        }
        return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() *
                               es.eigenvectors().transpose());
    };
    const double reg = 1e-6;
    Eigen::MatrixXd s1r = s1 + reg * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd s2r = s2 + reg * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd a = sqrt_psd(s1r);
    Eigen::MatrixXd inner = a * s2r * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
    double tr_sqrt = 0;
    for (int i = 0; i < d; ++i) tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()[i]));

    double dist = (mu1 - mu2).squaredNorm() + s1r.trace() + s2r.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, dist);
}

double wasserstein1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1d: empty input");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() == b.size()) {
        double s = 0;
        for (size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
        return s / static_cast<double>(a.size());
    }
    // General case: integrate |F_a^{-1}(q) - F_b^{-1}(q)| over the merged
    // quantile grid.
    std::vector<double> qs;
    qs.reserve(a.size() + b.size());
    for (size_t i = 1; i < a.size(); ++i) qs.push_back(static_cast<double>(i) / a.size());
    for (size_t i = 1; i < b.size(); ++i) qs.push_back(static_cast<double>(i) / b.size());
    qs.push_back(1.0);
    std::sort(qs.begin(), qs.end());
    qs.erase(std::unique(qs.begin(), qs.end()), qs.end());
    auto inv_cdf = [](const std::vector<double>& v, double q) {
        size_t idx = static_cast<size_t>(std::ceil(q * v.size())) - 1;
        idx = std::min(idx, v.size() - 1);
        return v[idx];
    };
    double total = 0, prev_q = 0;
    for (double q : qs) {
        double mid = 0.5 * (prev_q + q);
        total += (q - prev_q) * std::fabs(inv_cdf(a, mid) - inv_cdf(b, mid));
        prev_q = q;
    }
    return total;
}

double feature_wasserstein(const FeatureSet& f1, const FeatureSet& f2, int projections,
                           Rng& rng) {
    if (f1.dim() != f2.dim()) throw std::invalid_argument("feature_wasserstein: dim mismatch");
    if (f1.n() == 0 || f2.n() == 0)
        throw std::invalid_argument("feature_wasserstein: empty feature set");
    const int d = static_cast<int>(f1.dim());
    double total = 0;
    for (int p = 0; p < projections; ++p) {
        std::vector<double> dir(d);
        double norm = 0;
        for (auto& x : dir) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            dir[0] = 1;
            norm = 1;
        }
        for (auto& x : dir) x /= norm;
        auto project = [&](const FeatureSet& f) {
            std::vector<double> out(f.n());
            for (size_t i = 0; i < f.n(); ++i) {
                double s = 0;
                for (int j = 0; j < d; ++j) s += f.rows[i][j] * dir[j];
                out[i] = s;
            }
            return out;
        };
        total += wasserstein1d(project(f1), project(f2));
    }
    return total / projections;
}

namespace {

int split_rank(const std::string& s) { return s == "within" ? 0 : 1; }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

EvalReport build_report(const std::vector<DatasetEval>& datasets,
                        const std::vector<std::pair<std::string, PairScorer>>& scorers) {
    EvalReport report;
    for (const auto& ds : datasets) {
        if (ds.pairs.empty())
            throw std::invalid_argument("build_report: dataset '" + ds.dataset + "' is empty");
        ReportRow row;
        row.dataset = ds.dataset;
        row.split = ds.split;
        double p = 0, s = 0;
        std::vector<Image> outs, refs;
        for (const auto& [a, b] : ds.pairs) {
            p += psnr(a, b);
            s += ssim(a, b);
            outs.push_back(a);
            refs.push_back(b);
        }
        row.psnr = p / static_cast<double>(ds.pairs.size());
        row.ssim = s / static_cast<double>(ds.pairs.size());
        if (ds.pairs.size() >= 2)
            row.fid = frechet_distance(feature_set_of(outs, ds.dataset + ":out"),
                                       feature_set_of(refs, ds.dataset + ":ref"));
        for (const auto& [name, scorer] : scorers) {
            double acc = 0;
            bool failed = false;
            for (const auto& [a, b] : ds.pairs) {
                try {
                    acc += scorer(a, b);
                } catch (const std::exception&) {
                    failed = true;
                    break;
                }
            }
            row.extra.emplace_back(name,
                                   failed ? "error" : fmt(acc / static_cast<double>(ds.pairs.size())));
        }
        report.rows.push_back(std::move(row));
    }
    std::sort(report.rows.begin(), report.rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (split_rank(a.split) != split_rank(b.split))
            return split_rank(a.split) < split_rank(b.split);
        return a.dataset < b.dataset;
    });
    return report;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "dataset,split,psnr,ssim,fid";
    if (!rows.empty())
        for (const auto& [name, _] : rows[0].extra) os << "," << name;
    os << "\n";
    for (const auto& r : rows) {
        os << r.dataset << "," << r.split << "," << fmt(r.psnr) << "," << fmt(r.ssim) << ","
           << fmt(r.fid);
        for (const auto& [_, v] : r.extra) os << "," << v;
        os << "\n";
    }
    return os.str();
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json row;
        row["dataset"] = r.dataset;
        row["split"] = r.split;
        row["psnr"] = r.psnr;
        row["ssim"] = r.ssim;
        row["fid"] = r.fid;
        for (const auto& [name, v] : r.extra) row[name] = v;
        j.push_back(row);
    }
    return j.dump(2);
}

}  // namespace degforge::evalkit
