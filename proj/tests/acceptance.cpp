// Acceptance suite: trains the circle, ellipse and semi-supervised
// configurations and prints one PASS/FAIL line per checked quantity.
//
// Tiers:
//   desk (default)            N=2000, 60 epochs, 5 folds
//   CFREP_ACCEPTANCE_FULL=1   N=8000, 300 epochs, 5 folds
// The circle no-correction criterion carries its own reduced-scale variant
// (+50% tolerances, 10 min); every other threshold is the same in both tiers.
//
// The exit status is 0 once every criterion has been evaluated, whatever
// the verdicts. Set CFREP_ACCEPTANCE_STRICT=1 to exit 5 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrep/grad_check.hpp"
#include "cfrep/losses.hpp"
#include "cfrep/metrics.hpp"
#include "cfrep/ops.hpp"
#include "cfrep/presets.hpp"
#include "cfrep/rng.hpp"

using namespace cfrep;
namespace fs = std::filesystem;

namespace {

bool env_flag(const char* name) {
    const char* v = std::getenv(name);
    return v != nullptr && std::strcmp(v, "") != 0 && std::strcmp(v, "0") != 0;
}

Logger progress_logger() {
    // One line per finished fold keeps the output readable.
    return [](const std::string& line) {
        const auto slash = line.rfind('/');
        const auto epoch = line.find(" epoch ");
        if (slash == std::string::npos || epoch == std::string::npos) return;
        const auto cur = line.substr(epoch + 7, slash - epoch - 7);
        const auto total = line.substr(slash + 1, line.find(' ', slash) - slash - 1);
        if (cur == total) std::cerr << line << std::endl;
    };
}

StageResult stage(const std::string& preset, const std::string& label, const Scale& scale, const fs::path& out,
                  bool viz) {
    for (const auto& [name, cfg] : preset_stages(preset, scale)) {
        if (name != label) continue;
        std::cerr << "== " << preset << "/" << label << " (N=" << scale.n << ", " << scale.epochs << " epochs, "
                  << scale.folds << " folds)" << std::endl;
        auto s = run_stage(label, cfg, out / preset / label, viz, progress_logger());
        std::cerr << format_summary(s.run.summary) << "   " << s.seconds << " s" << std::endl;
        return s;
    }
    throw ConfigError("preset " + preset + " has no stage " + label);
}

std::vector<double> gaussian(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

double brute_dcor2(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto centred = [n](const std::vector<double>& v) {
        std::vector<double> d(n * n), row(n, 0.0);
        double all = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                d[i * n + j] = std::abs(v[i] - v[j]);
                row[i] += d[i * n + j];
            }
        for (auto& r : row) {
            all += r;
            r /= static_cast<double>(n);
        }
        all /= static_cast<double>(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] += all - row[i] - row[j];
        return d;
    };
    const auto a = centred(x), b = centred(y);
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < n * n; ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

double brute_auc(const std::vector<double>& s, const std::vector<double>& y) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return wins / pairs;
}

/// Reverse-mode gradients of the full autoencoder + projection composite
/// (reconstruction, NCC and correlation losses) against central differences.
GradCheckReport composite_grad_check() {
    Architecture arch;
    arch.image_size = 32;
    arch.channels = {2, 4};
    arch.latent_dim = 3;
    const ModelState model(arch, 1, 5);
    const auto params = model.to_double();
    std::vector<Tensor64> inputs;
    // Zero biases over the exactly-zero background put every background
    // pre-activation on the leaky-ReLU kink, where the loss has no gradient
    // to compare against; probe a nearby point with non-zero biases instead.
    Rng jitter(17);
    for (const auto& [name, t] : params.named()) {
        inputs.push_back(cast_tensor<double>(t, true));
        if (name.ends_with("bias")) {
            for (auto& v : inputs.back().values()) v = 0.05 * jitter.normal();
        }
    }
    const auto ds = generate_dataset(DatasetKind::circles, 8, 3);
    // Downsample 64 -> 32 by taking every other pixel.
    std::vector<double> small;
    for (std::size_t n = 0; n < 8; ++n)
        for (std::size_t r = 0; r < 32; ++r)
            for (std::size_t c = 0; c < 32; ++c) small.push_back(ds.images[n * 4096 + 2 * r * 64 + 2 * c]);
    const Tensor64 images({8, 1, 32, 32}, small);
    const auto t = ds.column(0), c = ds.column(1);

    const auto net = [&](Graph64& g, std::span<const Tensor64> p) {
        Parameters<double> q = params;
        std::size_t i = 0;
        for (auto& l : q.encoder_conv) {
            l.weight = p[i++];
            l.bias = p[i++];
        }
        q.encoder_fc.weight = p[i++];
        q.encoder_fc.bias = p[i++];
        q.decoder_fc.weight = p[i++];
        q.decoder_fc.bias = p[i++];
        for (auto& l : q.decoder_deconv) {
            l.weight = p[i++];
            l.bias = p[i++];
        }
        q.projection = p[i++];
        const auto latent = encode(g, arch, q, images);
        const auto rec = decode(g, arch, q, latent);
        const auto zp = project_raw(g, q, latent);
        return loss_joint<double>(g, images, rec, zp, t, {c}, 2.0, 5.0, true).total;
    };
    GradCheckOptions opts;  // step 1e-3, every coordinate
    return grad_check(net, inputs, opts);
}

std::vector<Check> property_suites() {
    const std::string k = "6";
    std::vector<Check> out;

    const auto gc = composite_grad_check();
    std::cerr << "gradient check: " << gc.coords_checked << " coordinates, " << gc.refined_coords
              << " needed a step below 1e-3 (leaky-ReLU kink within one step); worst "
              << gc.worst_autodiff << " vs " << gc.worst_numeric << std::endl;
    out.push_back(at_most(k, "autodiff vs finite differences, full composite (max rel)", gc.max_rel_error, 1e-3));

    Rng rng(2024);
    double cosine_gap = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 16 + static_cast<std::size_t>(rng.below(200));
        auto a = gaussian(n, rng), b = gaussian(n, rng);
        for (std::size_t i = 0; i < n; ++i) b[i] += 0.3 * trial / 200.0 * a[i];
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ma += a[i] / n;
            mb += b[i] / n;
        }
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += (a[i] - ma) * (b[i] - mb);
            na += (a[i] - ma) * (a[i] - ma);
            nb += (b[i] - mb) * (b[i] - mb);
        }
        const double cosine = dot / std::sqrt(na * nb);
        Graph64 g;
        const double batch = batch_pearson<double>(g, Tensor64({n}, a), b).r.item();
        cosine_gap = std::max({cosine_gap, std::abs(batch - cosine), std::abs(pearson(a, b) - cosine)});
    }
    out.push_back(at_most(k, "Pearson vs centred cosine (max abs)", cosine_gap, 1e-6));

    double dcor_gap = 0.0;
    for (std::size_t n : {4, 10, 50, 120, 200}) {
        auto x = gaussian(n, rng), y = gaussian(n, rng);
        for (std::size_t i = 0; i < n; ++i) y[i] += x[i] * x[i];
        dcor_gap = std::max(dcor_gap, std::abs(dcor2(x, y) - brute_dcor2(x, y)));
    }
    out.push_back(at_most(k, "dcor2 vs brute force, N <= 200 (max abs)", dcor_gap, 1e-10));

    for (double rho : {0.0, 0.3, 0.668, 0.9}) {
        auto a = gaussian(8000, rng), b = gaussian(8000, rng);
        for (std::size_t i = 0; i < a.size(); ++i) b[i] = rho * a[i] + std::sqrt(1 - rho * rho) * b[i];
        const double exact = -0.5 * std::log(1 - rho * rho);
        out.push_back(at_most(k, "KSG MI error at rho=" + std::to_string(rho).substr(0, 5) + " (nats)",
                              std::abs(mutual_info(a, b) - exact), 0.05));
    }

    double auc_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(80), y(80), flipped(80);
        for (std::size_t i = 0; i < s.size(); ++i) {
            y[i] = (i % 4 == 0) ? 1.0 : 0.0;
            s[i] = std::round(8 * (rng.normal() + 0.7 * y[i])) / 8;
            flipped[i] = 1 - y[i];
        }
        auc_gap = std::max({auc_gap, std::abs(auc(s, y) - brute_auc(s, y)), std::abs(auc(s, y) + auc(s, flipped) - 1)});
    }
    out.push_back(at_most(k, "AUC vs pair count and label-flip symmetry (max abs)", auc_gap, 1e-12));

    // Bit-determinism: the same seeded run twice, default architecture.
    auto cfg = preset_stages("circle-table1", Scale{200, 3, 2}).at(1).second;
    cfg.train.eta_warmup = 1;
    const auto ds = generate_dataset(cfg.data.kind, cfg.data.n, cfg.data.seed);
    const auto a = run_experiment(ds, cfg.train);
    const auto b = run_experiment(ds, cfg.train);
    bool identical = a.folds.size() == b.folds.size();
    for (std::size_t f = 0; identical && f < a.folds.size(); ++f) {
        const auto x = a.folds[f].trained.model.params().named(), y = b.folds[f].trained.model.params().named();
        for (std::size_t i = 0; i < x.size(); ++i) {
            identical = identical &&
                        std::memcmp(x[i].second.data(), y[i].second.data(), x[i].second.numel() * sizeof(float)) == 0;
        }
        identical = identical && a.folds[f].report.err == b.folds[f].report.err &&
                    a.folds[f].report.attributes[0].mi == b.folds[f].report.attributes[0].mi;
    }
    out.push_back(holds(k, "bit-identical parameters and metrics across two seeded runs", identical));
    return out;
}

nlohmann::json to_json(const Check& c) {
    return {{"criterion", c.criterion}, {"metric", c.metric}, {"value", c.value}, {"relation", c.relation},
            {"lo", c.lo},               {"hi", c.hi},         {"pass", c.pass}};
}

}  // namespace

int main() {
    const bool full = env_flag("CFREP_ACCEPTANCE_FULL");
    const bool strict = env_flag("CFREP_ACCEPTANCE_STRICT");
    const Scale scale = full ? kPaperScale : kSmokeScale;
    const char* out_env = std::getenv("CFREP_ACCEPTANCE_OUT");
    const fs::path out = out_env ? fs::path(out_env) : fs::current_path() / "acceptance_runs";
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Check> checks;
    auto add = [&](const std::vector<Check>& c) {
        checks.insert(checks.end(), c.begin(), c.end());
        for (const auto& x : c) std::cout << x.line() << std::endl;
    };

    try {
        std::cout << "tier: " << (full ? "full" : "desk") << " (N=" << scale.n << ", " << scale.epochs
                  << " epochs, " << scale.folds << " folds)" << std::endl;

        add(property_suites());

        const auto eta0 = stage("circle-table1", "eta0", scale, out, true);
        if (full) {
            add(check_circle_uncorrected(eta0, 1.0, "1"));
            add({at_most("1", "runtime (s)", eta0.seconds, 3600.0)});
        } else {
            add(check_circle_uncorrected(eta0, 1.5, "1"));
            add({at_most("1", "runtime, reduced scale (s)", eta0.seconds, 600.0)});
        }

        const auto eta2 = stage("circle-table1", "eta2", scale, out, true);
        add(check_circle_corrected(eta2, 1.0, "2"));
        add(check_visualization(eta0, eta2, "5"));

        std::vector<StageResult> gradual;
        for (const char* label : {"angle", "angle+position", "all"}) {
            gradual.push_back(stage("ellipse-gradual", label, scale, out, false));
        }
        add(check_ellipse_corrected(gradual.back(), "3"));
        add(check_gradual(gradual, "4"));

        add(check_ssl(stage("circle-ssl", "ssl", scale, out, false), "7"));
    } catch (const std::exception& e) {
        std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
        return 1;
    }

    std::map<std::string, std::pair<int, int>> per;
    for (const auto& c : checks) {
        auto& [pass, total] = per[c.criterion];
        pass += c.pass;
        ++total;
    }
    std::size_t failed = 0;
    std::cout << "\nsummary:" << std::endl;
    for (const auto& [crit, pt] : per) {
        std::cout << (pt.first == pt.second ? "PASS" : "FAIL") << "  criterion " << crit << ": " << pt.first << "/"
                  << pt.second << " checks" << std::endl;
        failed += pt.first != pt.second;
    }
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    std::cout << failed << " of " << per.size() << " criteria failing; " << minutes << " min" << std::endl;

    nlohmann::json report = {{"tier", full ? "full" : "desk"}, {"minutes", minutes}, {"checks", nlohmann::json::array()}};
    for (const auto& c : checks) report["checks"].push_back(to_json(c));
    fs::create_directories(out);
    std::ofstream(out / "acceptance_report.json") << report.dump(2) << '\n';

    return strict && failed > 0 ? 5 : 0;
}
