#include "hybridcal/distortion.h"

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "hybridcal/gridorder.h"

namespace hybridcal {

namespace {

constexpr double kMonotoneStep = 1e-3;

template <typename RadiusFn>
bool sampled_monotone(RadiusFn radius, double domain) {
    double prev = radius(0.0);
    for (int i = 1;; ++i) {
        const double r = std::min(i * kMonotoneStep, domain);
        const double cur = radius(r);
        if (!(cur > prev)) return false;
        prev = cur;
        if (r >= domain || domain - r < 1e-12) return true;
    }
}

// Solves radius(r) = target for r >= 0 with a bracketed Newton iteration.
// `radius` must be increasing on the bracket it is queried on.
double invert_radius(const std::function<double(double)>& radius, const std::function<double(double)>& slope,
                     double target, double domain) {
    if (target == 0.0) return 0.0;
    double lo = 0.0;
    double hi = std::max(domain, target);
    for (int i = 0; i < 64 && radius(hi) < target; ++i) {
        lo = hi;
        hi *= 2.0;
    }
    double r = target;
    if (r <= lo || r >= hi) r = 0.5 * (lo + hi);
    for (int iter = 0; iter < 100; ++iter) {
        const double f = radius(r) - target;
        if (f == 0.0) return r;
        if (f < 0.0) {
            lo = r;
        } else {
            hi = r;
        }
        const double d = slope(r);
        double next = d > 0.0 ? r - f / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - r) <= 1e-16 * std::max(1.0, r)) return next;
        r = next;
    }
    return r;
}

Vec2 scale_about(const Vec2& center, const Vec2& p, double s) { return center + (p - center) * s; }

void check_common(const Vec2& center, double r_norm, double domain) {
    if (!center.allFinite()) throw PreconditionError("model center must be finite");
    if (!(r_norm > 0.0) || !std::isfinite(r_norm)) throw PreconditionError("model r_norm must be positive");
    if (!(domain > 0.0) || !std::isfinite(domain)) throw PreconditionError("model domain must be positive");
}

}  // namespace

bool DistortionModel::is_monotone() const {
    return sampled_monotone([this](double r) { return radius(r); }, domain);
}

void DistortionModel::validate() const {
    check_common(center, r_norm, domain);
    for (double v : k)
        if (!std::isfinite(v)) throw PreconditionError("distortion coefficients must be finite");
    if (!is_monotone()) throw PreconditionError("distortion model is not monotone on its domain");
}

bool CorrectionModel::is_monotone() const {
    return sampled_monotone([this](double r) { return radius(r); }, domain);
}

void CorrectionModel::validate() const {
    check_common(center, r_norm, domain);
    for (double v : kp)
        if (!std::isfinite(v)) throw PreconditionError("correction coefficients must be finite");
    if (!is_monotone()) throw PreconditionError("correction model is not monotone on its domain");
}

Vec2 image_center(ImageSize size) { return {0.5 * (size.width - 1), 0.5 * (size.height - 1)}; }

double normalization_radius(ImageSize size) { return std::hypot(size.width, size.height); }

Vec2 distort_point(const DistortionModel& m, const Vec2& p) {
    const double r = (p - m.center).norm() / m.r_norm;
    return scale_about(m.center, p, m.factor(r));
}

Vec2 correct_point(const CorrectionModel& c, const Vec2& p) {
    const double r = (p - c.center).norm() / c.r_norm;
    return scale_about(c.center, p, c.factor(r));
}

Vec2 undistort_point(const DistortionModel& m, const Vec2& p) {
    const double rd = (p - m.center).norm() / m.r_norm;
    if (rd == 0.0) return p;
    const double rc = invert_radius([&](double r) { return m.radius(r); },
                                    [&](double r) {
                                        const double r2 = r * r;
                                        return m.k[0] + 3.0 * m.k[1] * r2 + 5.0 * m.k[2] * r2 * r2;
                                    },
                                    rd, m.domain);
    return scale_about(m.center, p, rc / rd);
}

Vec2 uncorrect_point(const CorrectionModel& c, const Vec2& p) {
    const double rc = (p - c.center).norm() / c.r_norm;
    if (rc == 0.0) return p;
    const auto& k = c.kp;
    const double rd = invert_radius([&](double r) { return c.radius(r); },
                                    [&](double r) {
                                        return k[0] + r * (2.0 * k[1] + r * (3.0 * k[2] + r * (4.0 * k[3] + r * 5.0 * k[4])));
                                    },
                                    rc, c.domain);
    return scale_about(c.center, p, rd / rc);
}

CorrectionFit fit_correction_model(const DistortionModel& m, int n_samples) {
    if (n_samples < 16) throw PreconditionError("correction fit needs at least 16 samples");
    m.validate();

    Eigen::MatrixXd a(n_samples - 1, 5);
    Eigen::VectorXd b(n_samples - 1);
    for (int i = 1; i < n_samples; ++i) {
        const double rc = m.domain * i / (n_samples - 1);
        const double rd = m.radius(rc);
        double pw = rd;
        for (int j = 0; j < 5; ++j) {
            a(i - 1, j) = pw;
            pw *= rd;
        }
        b(i - 1) = rc;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-13);
    if (qr.rank() < 5) throw DegenerateError("correction fit: singular least-squares system");
    const Eigen::VectorXd kp = qr.solve(b);

    CorrectionFit fit;
    for (int j = 0; j < 5; ++j) fit.model.kp[j] = kp(j);
    fit.model.center = m.center;
    fit.model.r_norm = m.r_norm;
    fit.model.domain = m.radius(m.domain);
    fit.max_residual = (a * kp - b).cwiseAbs().maxCoeff();
    if (!kp.allFinite()) throw DegenerateError("correction fit: non-finite coefficients");
    return fit;
}

namespace {

// Perpendicular residuals of every corrected point to its set's TLS line.
Eigen::VectorXd line_residuals(std::span<const Points2> lines, const CorrectionModel& c, std::size_t total) {
    Eigen::VectorXd res(static_cast<Eigen::Index>(total));
    Eigen::Index k = 0;
    Points2 corrected;
    for (const auto& line : lines) {
        corrected.clear();
        for (const auto& p : line) corrected.push_back(correct_point(c, p));
        const Line2D l = fit_line_tls(corrected);
        for (const auto& p : corrected) res(k++) = l.signed_distance(p);
    }
    return res;
}

}  // namespace

LineCorrectionResult estimate_correction_from_lines(std::span<const Points2> lines, const Vec2& center,
                                                    double r_norm, LineCorrectionOptions opts) {
    if (lines.size() < 4) throw PreconditionError("line-based correction needs at least 4 lines");
    std::size_t total = 0;
    for (const auto& l : lines) {
        if (l.size() < 5) throw PreconditionError("line-based correction needs at least 5 points per line");
        total += l.size();
    }

    CorrectionModel model;
    model.center = center;
    model.r_norm = r_norm;
    double max_r = 0.0;
    for (const auto& l : lines)
        for (const auto& p : l) max_r = std::max(max_r, (p - center).norm() / r_norm);
    model.domain = std::max(max_r, 1e-3);

    auto with_params = [&](const Eigen::Vector4d& q) {
        CorrectionModel m = model;
        for (int j = 0; j < 4; ++j) m.kp[j + 1] = q(j);
        return m;
    };

    Eigen::Vector4d q = Eigen::Vector4d::Zero();
    Eigen::VectorXd res = line_residuals(lines, with_params(q), total);
    double cost = res.squaredNorm();
    double lambda = 1e-3;
    LineCorrectionResult out;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        Eigen::MatrixXd jac(res.size(), 4);
        for (int j = 0; j < 4; ++j) {
            const double h = 1e-7;
            Eigen::Vector4d qp = q, qm = q;
            qp(j) += h;
            qm(j) -= h;
            jac.col(j) = (line_residuals(lines, with_params(qp), total) - line_residuals(lines, with_params(qm), total)) /
                         (2.0 * h);
        }
        const Eigen::Matrix4d jtj = jac.transpose() * jac;
        const Eigen::Vector4d g = jac.transpose() * res;
        if (g.cwiseAbs().maxCoeff() < opts.tolerance || cost < 1e-24) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::Matrix4d a = jtj;
            for (int j = 0; j < 4; ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-12);
            const Eigen::Vector4d step = a.ldlt().solve(-g);
            if (step.norm() < opts.tolerance) {
                out.converged = true;
                break;
            }
            const Eigen::Vector4d cand = q + step;
            const Eigen::VectorXd cand_res = line_residuals(lines, with_params(cand), total);
            const double cand_cost = cand_res.squaredNorm();
            if (std::isfinite(cand_cost) && cand_cost < cost) {
                q = cand;
                res = cand_res;
                const double rel = (cost - cand_cost) / std::max(cost, 1e-300);
                cost = cand_cost;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                ++out.iterations;
                if (rel < 1e-14) out.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (out.converged) break;
        if (!accepted) {
            out.converged = true;  // no descent direction left at machine precision
            break;
        }
    }
    out.model = with_params(q);
    out.rms_residual = std::sqrt(cost / static_cast<double>(total));
    return out;
}

Image warp_image(const Image& img, const CorrectionModel& c) {
    if (img.empty()) throw PreconditionError("warp_image: empty image");
    if (c.kp == std::array<double, 5>{1.0, 0.0, 0.0, 0.0, 0.0}) return img;
    Image out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Vec2 src = uncorrect_point(c, Vec2(x, y));
            out(x, y) = sample_bilinear(img, src.x(), src.y(), 0.0);
        }
    }
    return out;
}

double grid_loss(std::span<const Vec2> p_dst, std::span<const Vec2> p_cor) {
    if (p_dst.size() != p_cor.size()) throw PreconditionError("grid_loss: length mismatch");
    if (p_dst.empty()) throw PreconditionError("grid_loss: empty point lists");
    double sum = 0.0;
    for (std::size_t i = 0; i < p_dst.size(); ++i) sum += (p_dst[i] - p_cor[i]).lpNorm<1>();
    return sum / static_cast<double>(p_dst.size());
}

void to_json(nlohmann::json& j, const DistortionModel& m) {
    j = {{"k", m.k}, {"center", {m.center.x(), m.center.y()}}, {"r_norm", m.r_norm}, {"domain", m.domain}};
}

void from_json(const nlohmann::json& j, DistortionModel& m) {
    const auto k = j.at("k").get<std::vector<double>>();
    if (k.size() != 3) throw PreconditionError("distortion model needs exactly 3 coefficients");
    std::copy(k.begin(), k.end(), m.k.begin());
    m.center = Vec2(j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>());
    m.r_norm = j.at("r_norm").get<double>();
    m.domain = j.value("domain", kDefaultModelDomain);
}

void to_json(nlohmann::json& j, const CorrectionModel& c) {
    j = {{"k", c.kp}, {"center", {c.center.x(), c.center.y()}}, {"r_norm", c.r_norm}, {"domain", c.domain}};
}

void from_json(const nlohmann::json& j, CorrectionModel& c) {
    const auto k = j.at("k").get<std::vector<double>>();
    if (k.size() != 5) throw PreconditionError("correction model needs exactly 5 coefficients");
    std::copy(k.begin(), k.end(), c.kp.begin());
    c.center = Vec2(j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>());
    c.r_norm = j.at("r_norm").get<double>();
    c.domain = j.value("domain", kDefaultModelDomain);
}

}  // namespace hybridcal
