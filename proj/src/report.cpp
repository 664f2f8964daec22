// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0

#include "normlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include <fmt/format.h>

#include "svg.hpp"

namespace normlab {

std::string_view to_string(ReportMode mode) {
    switch (mode) {
        case ReportMode::NormScan: return "norm-scan";
        case ReportMode::LrBs: return "lr-bs";
        case ReportMode::PowerLaw: return "power-law";
        case ReportMode::Reach: return "reach";
        case ReportMode::Layout: return "layout";
    }
    return "?";
}

std::optional<ReportMode> parse_report_mode(std::string_view text) {
    for (ReportMode m : {ReportMode::NormScan, ReportMode::LrBs, ReportMode::PowerLaw, ReportMode::Reach, ReportMode::Layout})
        if (to_string(m) == text) return m;
    return std::nullopt;
}

const FitResult* NormScanCell::primary() const {
    if (!ensemble) return nullptr;
    for (const auto& v : ensemble->variants)
        if (v.variant == "fit/smooth/constrained") return v.has_vertex ? &v : nullptr;
    return nullptr;
}

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string layout_cols(const LayerLrScales& l) {
    return fmt::format("{},{},{}", num(l.input), num(l.hidden), num(l.output));
}

std::string cell_cols(const NormScanCell& c) { return fmt::format("{},{},{}", c.batch, layout_cols(c.layout), c.tokens); }

double norm_of(const RunLog& log, const LogLine& e, const std::string& key) {
    auto it = e.norms.find(key);
    if (it == e.norms.end())
        throw SchemaError(fmt::format("{}: eval at step {} has no norm for '{}'", log.path.string(), e.step, key));
    return it->second;
}

void write_text(const std::filesystem::path& path, const std::string& text, ReportOutput& out) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(fmt::format("cannot write {}", path.string()));
    f << text;
    out.files.push_back(path);
}

std::string linear_fit_row(std::string_view label, const LinearFit& f, std::size_t n) {
    return fmt::format("{},{},{},{},{},{},{},{},{}\n", label, num(f.coef[0]), num(f.stderr_[0]), num(f.coef[1]),
                       num(f.stderr_[1]), num(f.coef[2]), num(f.stderr_[2]), num(f.rss), n);
}

constexpr std::string_view kLinearFitHeader = "fit,alpha,alpha_se,beta,beta_se,gamma,gamma_se,rss,n\n";

}  // namespace

std::vector<NormScanCell> norm_scan(const std::vector<RunLog>& logs, const AnalysisSection& analysis) {
    using Key = std::tuple<std::size_t, double, double, double, std::uint64_t>;
    std::map<Key, NormScanCell> cells;
    std::map<Key, std::vector<double>> init_losses;

    for (const auto& log : logs) {
        const auto& h = log.header;
        std::optional<double> init;
        std::vector<const LogLine*> evals;
        for (const auto& e : log.evals) {
            if (e.tokens == 0) {
                init = e.raw_loss;
            } else {
                evals.push_back(&e);
            }
        }
        std::vector<SmoothedPoint> smoothed;
        if (analysis.smoothing.enabled && evals.size() >= 3) {
            std::vector<SeriesPoint> series;
            for (const auto* e : evals) series.push_back({static_cast<double>(e->tokens), e->raw_loss});
            smoothed = smooth_losses(series);
        }
        for (std::size_t i = 0; i < evals.size(); ++i) {
            const LogLine& e = *evals[i];
            const Key key{h.batch, h.layout.input, h.layout.hidden, h.layout.output, e.tokens};
            NormScanCell& c = cells[key];
            c.batch = h.batch;
            c.layout = h.layout;
            c.tokens = e.tokens;
            c.run_ids.push_back(h.run_id);
            const bool smooth = !smoothed.empty() && analysis.smoothing.applies(h.batch, e.tokens);
            c.points.push_back({h.lr, norm_of(log, e, analysis.norm_param), e.raw_loss,
                                smooth ? smoothed[i].mean : e.raw_loss, smooth ? smoothed[i].stderr_ : 0.0});
            if (init) init_losses[key].push_back(*init);
        }
    }

    std::vector<NormScanCell> out;
    for (auto& [key, c] : cells) {
        std::vector<std::size_t> idx(c.points.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(c.points[a].lr, c.run_ids[a]) < std::tie(c.points[b].lr, c.run_ids[b]);
        });
        NormScanCell sorted = c;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            sorted.points[i] = c.points[idx[i]];
            sorted.run_ids[i] = c.run_ids[idx[i]];
        }
        const auto& inits = init_losses[key];
        if (!inits.empty()) {
            double s = 0.0;
            for (double v : inits) s += v;
            sorted.init_loss = s / static_cast<double>(inits.size());
        }
        if (sorted.points.size() < 3) {
            sorted.note = fmt::format("{} runs; at least 3 are needed", sorted.points.size());
        } else if (inits.size() != sorted.points.size()) {
            sorted.note = "a run has no step-0 eval; init loss unknown";
        } else {
            try {
                sorted.ensemble = fit_variant_ensemble(sorted.points, sorted.init_loss, analysis.fit_points);
            } catch (const Error& e) {
                sorted.note = e.what();
            }
        }
        out.push_back(std::move(sorted));
    }
    return out;
}

std::string norm_scan_points_csv(const std::vector<NormScanCell>& cells) {
    std::string o =
        "batch,layout_input,layout_hidden,layout_output,tokens,run_id,lr,norm,log2_norm,raw_loss,smoothed_loss,"
        "smoothed_stderr\n";
    for (const auto& c : cells) {
        for (std::size_t i = 0; i < c.points.size(); ++i) {
            const auto& p = c.points[i];
            o += fmt::format("{},{},{},{},{},{},{},{}\n", cell_cols(c), c.run_ids[i], num(p.lr), num(p.norm),
                             num(std::log2(p.norm)), num(p.raw_loss), num(p.smoothed_loss), num(p.smoothed_stderr));
        }
    }
    return o;
}

std::string norm_scan_fits_csv(const std::vector<NormScanCell>& cells) {
    std::string o =
        "batch,layout_input,layout_hidden,layout_output,tokens,variant,fitted,constrained,n_used,a,b,c,has_vertex,"
        "log2_norm_star,loss_star,lr_star,note\n";
    for (const auto& c : cells) {
        if (!c.ensemble) continue;
        for (const auto& v : c.ensemble->variants) {
            o += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"\n", cell_cols(c), v.variant, int(v.fitted),
                             int(v.constrained), v.n_used, num(v.coef[0]), num(v.coef[1]), num(v.coef[2]),
                             int(v.has_vertex), v.has_vertex ? num(v.log2_norm_star) : "",
                             v.has_vertex ? num(v.loss_star) : "", v.has_vertex ? num(v.lr_star) : "", v.note);
        }
    }
    return o;
}

std::string norm_scan_optima_csv(const std::vector<NormScanCell>& cells) {
    std::string o =
        "batch,layout_input,layout_hidden,layout_output,tokens,n_runs,init_loss,has_optimum,log2_norm_star,loss_star,"
        "lr_star,log2_norm_min,log2_norm_max,loss_min,loss_max,log2_lr_min,log2_lr_max,usable_variants,note\n";
    for (const auto& c : cells) {
        const FitResult* p = c.primary();
        std::string spread = ",,,,,,0";
        if (c.ensemble && c.ensemble->usable > 0) {
            const auto& e = *c.ensemble;
            spread = fmt::format("{},{},{},{},{},{},{}", num(e.log2_norm_star.min), num(e.log2_norm_star.max),
                                 num(e.loss_star.min), num(e.loss_star.max), num(e.log2_lr_star.min),
                                 num(e.log2_lr_star.max), e.usable);
        }
        std::string note = c.note;
        if (note.empty() && c.ensemble && !p) note = "constrained fit on smoothed losses has no interior optimum";
        o += fmt::format("{},{},{},{},{},{},{},{},\"{}\"\n", cell_cols(c), c.points.size(), num(c.init_loss), int(p != nullptr),
                         p ? num(p->log2_norm_star) : "", p ? num(p->loss_star) : "", p ? num(p->lr_star) : "", spread,
                         note);
    }
    return o;
}

std::vector<Optimum> cell_optima(const std::vector<NormScanCell>& cells) {
    std::vector<Optimum> out;
    for (const auto& c : cells)
        if (const FitResult* p = c.primary())
            out.push_back({p->lr_star, static_cast<double>(c.batch), static_cast<double>(c.tokens)});
    return out;
}

std::vector<PowerLawPoint> best_batch_per_horizon(const std::vector<NormScanCell>& cells) {
    std::map<std::uint64_t, std::pair<double, std::size_t>> best;
    for (const auto& c : cells) {
        const FitResult* p = c.primary();
        if (!p) continue;
        auto it = best.find(c.tokens);
        if (it == best.end() || p->loss_star < it->second.first) best[c.tokens] = {p->loss_star, c.batch};
    }
    std::vector<PowerLawPoint> out;
    for (const auto& [tokens, b] : best) out.push_back({static_cast<double>(tokens), static_cast<double>(b.second)});
    return out;
}

std::vector<LayoutRank> layout_ranking(const std::vector<RunLog>& logs) {
    std::vector<LayoutRank> out;
    for (const auto& log : logs) {
        if (log.evals.empty()) continue;
        const auto& h = log.header;
        const auto& last = log.evals.back();
        out.push_back({h.run_id, h.lr, h.batch, h.seed, h.layout, last.tokens, last.raw_loss, false});
    }
    std::stable_sort(out.begin(), out.end(), [](const LayoutRank& a, const LayoutRank& b) {
        return std::tie(a.loss, a.run_id) < std::tie(b.loss, b.run_id);
    });
    const std::size_t top = (out.size() + 9) / 10;
    for (std::size_t i = 0; i < top; ++i) out[i].top_decile = true;
    return out;
}

ReportOutput emit_report(const std::filesystem::path& logs_dir, ReportMode mode, const std::filesystem::path& out_dir,
                         const ReportOptions& options) {
    const auto logs = read_run_logs(logs_dir);
    std::filesystem::create_directories(out_dir);
    ReportOutput out;
    const auto& a = options.analysis;
    const auto plots = out_dir / "plots";
    if (options.write_svg) std::filesystem::create_directories(plots);
    using detail::SvgPlot;
    using detail::SvgSeries;

    switch (mode) {
        case ReportMode::NormScan: {
            const auto cells = norm_scan(logs, a);
            if (options.write_csv) {
                write_text(out_dir / "norm_scan_points.csv", norm_scan_points_csv(cells), out);
                write_text(out_dir / "norm_scan_fits.csv", norm_scan_fits_csv(cells), out);
                write_text(out_dir / "norm_scan_optima.csv", norm_scan_optima_csv(cells), out);
            }
            for (const auto& c : cells) {
                const FitResult* p = c.primary();
                out.summary.push_back(
                    p ? fmt::format("B={} D={}: log2 norm* {:.3f}, loss* {:.4f}, lr* {:.4g}", c.batch, c.tokens,
                                    p->log2_norm_star, p->loss_star, p->lr_star)
                      : fmt::format("B={} D={}: no optimum ({})", c.batch, c.tokens,
                                    c.note.empty() ? "curvature <= 0" : c.note));
                if (!options.write_svg) continue;
                SvgPlot plot(fmt::format("loss vs output norm, B={} D={}", c.batch, c.tokens), "log2 ||W_out||", "loss");
                SvgSeries raw{"raw", detail::palette(0)}, sm{"smoothed", detail::palette(1)};
                for (const auto& pt : c.points) {
                    raw.x.push_back(std::log2(pt.norm));
                    raw.y.push_back(pt.raw_loss);
                    sm.x.push_back(std::log2(pt.norm));
                    sm.y.push_back(pt.smoothed_loss);
                }
                plot.add(raw);
                plot.add(sm);
                if (c.ensemble) {
                    const auto& fit = c.ensemble->variants[3];
                    if (fit.fitted && !c.points.empty()) {
                        SvgSeries curve{"fit (constrained)", detail::palette(2), {}, {}, true};
                        const double lo = std::log(c.points.front().norm), hi = std::log(c.points.back().norm);
                        const double x0 = std::min(lo, hi), x1 = std::max(lo, hi);
                        for (int k = 0; k <= 60; ++k) {
                            const double l = x0 + (x1 - x0) * k / 60.0;
                            curve.x.push_back(l / std::log(2.0));
                            curve.y.push_back(std::exp(fit.coef[0] * l * l + fit.coef[1] * l + fit.coef[2]));
                        }
                        plot.add(curve);
                    }
                }
                if (p) plot.vline(p->log2_norm_star, detail::palette(3));
                const auto name = fmt::format("norm_scan_b{}_d{}_l{:g}-{:g}-{:g}.svg", c.batch, c.tokens, c.layout.input,
                                              c.layout.hidden, c.layout.output);
                write_text(plots / name, plot.render(), out);
            }
            break;
        }
        case ReportMode::LrBs: {
            const auto cells = norm_scan(logs, a);
            const auto optima = cell_optima(cells);
            LinearFit free;
            try {
                free = regress_lr_bs_horizon(optima);
            } catch (const Error& e) {
                throw Error(fmt::format("lr-bs regression over {} cell optima: {}", optima.size(), e.what()));
            }
            const LinearFit heur = regress_lr_bs_horizon_fixed(optima);
            if (options.write_csv) {
                std::string fits(kLinearFitHeader);
                fits += linear_fit_row("free", free, optima.size());
                fits += linear_fit_row("heuristic", heur, optima.size());
                write_text(out_dir / "lr_bs.csv", fits, out);
                std::string pts = "batch,tokens,lr_star,residual_free,residual_heuristic\n";
                for (std::size_t i = 0; i < optima.size(); ++i)
                    pts += fmt::format("{},{},{},{},{}\n", num(optima[i].batch), num(optima[i].tokens), num(optima[i].lr),
                                       num(free.residuals[i]), num(heur.residuals[i]));
                write_text(out_dir / "lr_bs_points.csv", pts, out);
            }
            out.summary.push_back(fmt::format("log2 lr* = {:.3f}({:.3f}) log2 B {:+.3f}({:.3f}) log2 D {:+.3f}", free.coef[0],
                                              free.stderr_[0], free.coef[1], free.stderr_[1], free.coef[2]));
            out.summary.push_back(fmt::format("heuristic 1.5 log2 B - log2 D: gamma {:.3f}, rss {:.4g}", heur.coef[2], heur.rss));
            if (options.write_svg) {
                SvgPlot plot("optimal learning rate vs horizon", "log2 D", "log2 lr*");
                std::map<double, std::size_t> color;
                for (const auto& o : optima) color.emplace(o.batch, color.size());
                for (const auto& [b, ci] : color) {
                    SvgSeries pts{fmt::format("B={}", b), detail::palette(ci)};
                    SvgSeries line{fmt::format("fit B={}", b), detail::palette(ci), {}, {}, true, true};
                    for (const auto& o : optima) {
                        if (o.batch != b) continue;
                        pts.x.push_back(std::log2(o.tokens));
                        pts.y.push_back(std::log2(o.lr));
                        line.x.push_back(std::log2(o.tokens));
                        line.y.push_back(free.coef[0] * std::log2(b) + free.coef[1] * std::log2(o.tokens) + free.coef[2]);
                    }
                    plot.add(pts);
                    plot.add(line);
                }
                write_text(plots / "lr_bs.svg", plot.render(), out);
            }
            break;
        }
        case ReportMode::PowerLaw: {
            const auto cells = norm_scan(logs, a);
            const auto pts = best_batch_per_horizon(cells);
            PowerLaw law;
            try {
                law = fit_power_law(pts);
            } catch (const Error& e) {
                throw Error(fmt::format("power-law fit over {} horizons: {}", pts.size(), e.what()));
            }
            if (options.write_csv) {
                std::string t = "tokens,best_batch\n";
                for (const auto& p : pts) t += fmt::format("{},{}\n", num(p.x), num(p.y));
                write_text(out_dir / "power_law_points.csv", t, out);
                write_text(out_dir / "power_law.csv",
                           fmt::format("multiplier,multiplier_se,exponent,exponent_se,n\n{},{},{},{},{}\n",
                                       num(law.multiplier), num(law.multiplier_stderr), num(law.exponent),
                                       num(law.exponent_stderr), pts.size()),
                           out);
            }
            out.summary.push_back(fmt::format("B* = {:.4g} D^({:.3f} +- {:.3f})", law.multiplier, law.exponent,
                                              law.exponent_stderr));
            if (options.write_svg) {
                SvgPlot plot("optimal batch vs horizon", "log2 D", "log2 B*");
                SvgSeries p{"B*", detail::palette(0)}, line{"power law", detail::palette(1), {}, {}, true};
                for (const auto& q : pts) {
                    p.x.push_back(std::log2(q.x));
                    p.y.push_back(std::log2(q.y));
                    line.x.push_back(std::log2(q.x));
                    line.y.push_back(std::log2(law.multiplier * std::pow(q.x, law.exponent)));
                }
                plot.add(p);
                plot.add(line);
                write_text(plots / "power_law.svg", plot.render(), out);
            }
            break;
        }
        case ReportMode::Reach: {
            std::vector<NormTrajectory> runs;
            for (const auto& log : logs) {
                NormTrajectory t{log.header.run_id, log.header.lr, static_cast<double>(log.header.batch), {}};
                for (const auto& e : log.evals) t.points.push_back({static_cast<double>(e.tokens), norm_of(log, e, a.norm_param)});
                runs.push_back(std::move(t));
            }
            const ReachSet r = norm_reach_set(runs, a.band_lo, a.band_hi);
            if (options.write_csv) {
                std::string t = "run_id,lr,batch,tokens_first\n";
                for (const auto& e : r.entries) t += fmt::format("{},{},{},{}\n", e.run_id, num(e.lr), num(e.batch), num(e.tokens_first));
                write_text(out_dir / "reach.csv", t, out);
                std::string x = "run_id,reason\n";
                for (const auto& e : r.excluded) x += fmt::format("{},\"{}\"\n", e.run_id, e.reason);
                write_text(out_dir / "reach_excluded.csv", x, out);
                std::string f(kLinearFitHeader);
                if (r.free_fit) f += linear_fit_row("free", *r.free_fit, r.entries.size());
                if (r.heuristic_fit) f += linear_fit_row("heuristic", *r.heuristic_fit, r.entries.size());
                write_text(out_dir / "reach_fit.csv", f, out);
            }
            out.summary.push_back(fmt::format("{} runs reach log2 norm in [{}, {}]; {} excluded", r.entries.size(),
                                              r.band_lo, r.band_hi, r.excluded.size()));
            if (!r.fit_note.empty()) out.summary.push_back("free fit skipped: " + r.fit_note);
            if (options.write_svg) {
                SvgPlot plot("first horizon inside the norm band", "log2 D_first", "log2 lr");
                std::map<double, std::size_t> color;
                for (const auto& e : r.entries) color.emplace(e.batch, color.size());
                for (const auto& [b, ci] : color) {
                    SvgSeries s{fmt::format("B={}", b), detail::palette(ci)};
                    for (const auto& e : r.entries) {
                        if (e.batch != b) continue;
                        s.x.push_back(std::log2(e.tokens_first));
                        s.y.push_back(std::log2(e.lr));
                    }
                    plot.add(s);
                }
                write_text(plots / "reach.svg", plot.render(), out);
            }
            break;
        }
        case ReportMode::Layout: {
            const auto ranks = layout_ranking(logs);
            if (options.write_csv) {
                std::string t = "rank,run_id,lr,batch,seed,layout_input,layout_hidden,layout_output,tokens,loss,top_decile\n";
                for (std::size_t i = 0; i < ranks.size(); ++i) {
                    const auto& r = ranks[i];
                    t += fmt::format("{},{},{},{},{},{},{},{},{}\n", i + 1, r.run_id, num(r.lr), r.batch, r.seed,
                                     layout_cols(r.layout), r.tokens, num(r.loss), int(r.top_decile));
                }
                write_text(out_dir / "layout.csv", t, out);
            }
            const std::size_t top = (ranks.size() + 9) / 10;
            out.summary.push_back(fmt::format("{} runs ranked; top {} flagged", ranks.size(), top));
            break;
        }
    }
    return out;
}

}  // namespace normlab
