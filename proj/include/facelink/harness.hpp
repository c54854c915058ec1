// Copyright 2026 The facelink Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "facelink/config.hpp"
#include "facelink/error.hpp"
#include "facelink/pipeline.hpp"
#include "facelink/predictor.hpp"
#include "facelink/render.hpp"
#include "facelink/text.hpp"
#include "facelink/trace.hpp"

namespace facelink {

/// Per-seed inputs shared by every (rate, scheme) cell.
struct SeedContext {
  std::uint64_t seed = 0;
  CoefficientTrace trace;
  BlendBasis basis;
  std::optional<PredictorModel> model;
  TruthCache truth;
};

inline CoefficientTrace experiment_trace(const ExperimentConfig& config, std::uint64_t seed) {
  if (!config.synthetic()) return load_trace(config.trace);
  auto spec = config.synth;
  spec.seed = seed;
  return synth_trace(spec);
}

/// Builds trace, basis and (when a scheme needs one) the predictor for a seed.
/// Models are trained only for the coefficients the schemes can predict.
inline SeedContext prepare_seed(const ExperimentConfig& config, std::uint64_t seed,
                                const std::vector<Scheme>& schemes,
                                std::optional<std::vector<std::size_t>> train_features = std::nullopt) {
  SeedContext ctx{seed, experiment_trace(config, seed), {}, std::nullopt, {}};
  ctx.basis = make_basis(config.image_height, config.image_width, ctx.trace.features(), mix_seed(seed, 1));
  ctx.truth = render_truth(ctx.trace, config.chunk_frames, ctx.basis);

  bool need_all = false, need_dynamic = false;
  for (auto s : schemes) {
    need_all |= s == Scheme::no_selection;
    need_dynamic |= s == Scheme::proposed;
  }
  if (need_all || need_dynamic || train_features) {
    std::vector<std::size_t> features;
    if (train_features) {
      features = *train_features;
    } else if (need_all) {
      for (std::size_t m = 0; m < ctx.trace.features(); ++m) features.push_back(m);
    } else {
      features = dynamic_union(ctx.trace, config.chunk_frames, SelectorConfig{config.delta});
    }
    auto pc = config.predictor;
    pc.seed = mix_seed(seed, 2);
    ctx.model = train(ctx.trace, features, pc);
  }
  return ctx;
}

struct SweepRow {
  double rate = 0.0;               ///< bit/s
  std::uint64_t budget_bits = 0;   ///< floor(tau * rate), bits per chunk interval
  Scheme scheme = Scheme::proposed;
  std::uint64_t seed = 0;
  std::string status = "ok";       ///< "ok" or an error category
  std::size_t n_f_min = 0;
  std::size_t n_f_max = 0;
  std::uint64_t payload_bits_max = 0;
  bool budget_exempt = false;
  double mean_psnr = 0.0;          ///< dB, mean over chunks
  double coeff_mse = 0.0;          ///< mean over chunks
  std::string per_frame_path;      ///< relative to the output directory
  std::vector<ChunkResult> chunks; ///< not serialized

  bool ok() const { return status == "ok"; }
};

inline SweepRow summarize(double rate, std::uint64_t budget_bits, Scheme scheme, std::uint64_t seed,
                          std::vector<ChunkResult> chunks) {
  SweepRow row;
  row.rate = rate;
  row.budget_bits = budget_bits;
  row.scheme = scheme;
  row.seed = seed;
  row.n_f_min = SIZE_MAX;
  double psnr_sum = 0.0, mse_sum = 0.0;
  for (const auto& c : chunks) {
    row.n_f_min = std::min(row.n_f_min, c.n_f);
    row.n_f_max = std::max(row.n_f_max, c.n_f);
    row.payload_bits_max = std::max(row.payload_bits_max, c.payload_bits);
    row.budget_exempt = row.budget_exempt || c.budget_exempt;
    psnr_sum += c.mean_psnr;
    mse_sum += c.coeff_mse;
  }
  row.mean_psnr = psnr_sum / static_cast<double>(chunks.size());
  row.coeff_mse = mse_sum / static_cast<double>(chunks.size());
  row.chunks = std::move(chunks);
  return row;
}

/// One (rate, scheme) cell for a prepared seed. Pipeline errors become the
/// row status instead of propagating.
inline SweepRow run_cell(const ExperimentConfig& config, const SeedContext& ctx, double rate, Scheme scheme) {
  const auto options = config.options(rate);
  const auto budget_bits = options.budget.budget_bits();
  try {
    auto results = run_stream(ctx.trace, scheme, StreamConfig{config.chunk_frames, options},
                              ctx.model ? &*ctx.model : nullptr, ctx.basis, &ctx.truth);
    return summarize(rate, budget_bits, scheme, ctx.seed, std::move(results));
  } catch (const Error& e) {
    SweepRow row;
    row.rate = rate;
    row.budget_bits = budget_bits;
    row.scheme = scheme;
    row.seed = ctx.seed;
    row.status = std::string(to_string(e.code()));
    row.budget_exempt = scheme == Scheme::upper_bound;
    return row;
  }
}

struct SweepResult {
  std::vector<SweepRow> rows;  ///< ordered by seed, then rate, then scheme
};

inline std::string per_frame_name(const SweepRow& row, std::size_t rate_index) {
  return "frames/" + std::string(to_string(row.scheme)) + "_rate" + std::to_string(rate_index) +
         "_seed" + std::to_string(row.seed) + ".csv";
}

/// Every (rate, scheme, seed) cell of the config. Rows come back in a fixed
/// order independent of how the cells were evaluated.
inline SweepResult sweep(const ExperimentConfig& config) {
  config.validate();
  SweepResult result;
  for (auto seed : config.seeds) {
    const auto ctx = prepare_seed(config, seed, config.schemes);
    std::optional<SweepRow> upper;  // rate independent
    for (std::size_t ri = 0; ri < config.rates.size(); ++ri) {
      const double rate = config.rates[ri];
      for (auto scheme : config.schemes) {
        SweepRow row;
        if (scheme == Scheme::upper_bound) {
          if (!upper) upper = run_cell(config, ctx, rate, scheme);
          row = *upper;
          row.rate = rate;
          row.budget_bits = config.budget(rate).budget_bits();
          for (auto& c : row.chunks) c.budget_bits = row.budget_bits;
        } else {
          row = run_cell(config, ctx, rate, scheme);
        }
        row.per_frame_path = row.ok() ? per_frame_name(row, ri) : "";
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "rate_bps,budget_bits,scheme,seed,status,n_f_min,n_f_max,payload_bits_max,budget_exempt,"
         "mean_psnr_db,coeff_mse,per_frame_path\n";
  for (const auto& r : result.rows) {
    out << text::format_double(r.rate) << ',' << r.budget_bits << ',' << to_string(r.scheme) << ','
        << r.seed << ',' << r.status << ',';
    if (r.ok()) {
      out << r.n_f_min << ',' << r.n_f_max << ',' << r.payload_bits_max << ','
          << (r.budget_exempt ? 1 : 0) << ',' << text::format_fixed(r.mean_psnr, 6) << ','
          << text::format_double(r.coeff_mse) << ',' << r.per_frame_path << '\n';
    } else {
      out << ",,," << (r.budget_exempt ? 1 : 0) << ",,,\n";
    }
  }
}

/// chunk_id,frame,psnr_db (frame is 1-based within the chunk; psnr "inf" when exact)
inline void write_per_frame_csv(std::ostream& out, const std::vector<ChunkResult>& chunks) {
  out << "chunk_id,frame,psnr_db\n";
  for (const auto& c : chunks)
    for (std::size_t t = 0; t < c.frame_psnr.size(); ++t) {
      const double p = c.frame_psnr[t];
      out << c.chunk_id << ',' << t + 1 << ',' << (std::isinf(p) ? std::string("inf") : text::format_fixed(p, 6))
          << '\n';
    }
}

/// Mean PSNR over seeds per (scheme, rate); only successful rows count.
inline std::map<Scheme, std::vector<std::pair<std::uint64_t, double>>> sweep_series(const SweepResult& result) {
  std::map<std::pair<Scheme, std::uint64_t>, std::pair<double, std::size_t>> acc;
  for (const auto& r : result.rows) {
    if (!r.ok()) continue;
    auto& a = acc[{r.scheme, r.budget_bits}];
    a.first += r.mean_psnr;
    a.second += 1;
  }
  std::map<Scheme, std::vector<std::pair<std::uint64_t, double>>> series;
  for (const auto& [key, a] : acc)
    series[key.first].emplace_back(key.second, a.first / static_cast<double>(a.second));
  return series;
}

/// Self-contained SVG line plot: mean PSNR (dB) against bits per chunk interval.
inline std::string sweep_svg(const SweepResult& result) {
  const auto series = sweep_series(result);
  constexpr double W = 720, H = 480, L = 80, R = 200, T = 40, B = 70;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool first = true;
  for (const auto& [s, pts] : series)
    for (const auto& [x, y] : pts) {
      const double xd = static_cast<double>(x);
      if (first) {
        x_min = x_max = xd;
        y_min = y_max = y;
        first = false;
      }
      x_min = std::min(x_min, xd);
      x_max = std::max(x_max, xd);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  if (x_max <= x_min) x_max = x_min + 1;
  y_min = std::floor(y_min / 5.0) * 5.0;
  y_max = std::ceil(y_max / 5.0) * 5.0;
  if (y_max <= y_min) y_max = y_min + 5.0;
  const auto px = [&](double x) { return L + (x - x_min) / (x_max - x_min) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y_min) / (y_max - y_min) * (H - T - B); };
  const auto f2 = [](double v) { return text::format_fixed(v, 2); };

  static constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 5.0;
    const double yv = y_min + (y_max - y_min) * i / 5.0;
    o << "<text x=\"" << f2(px(xv)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
      << static_cast<long long>(std::llround(xv)) << "</text>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << f2(py(yv) + 4) << "\" text-anchor=\"end\">" << f2(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 25
    << "\" text-anchor=\"middle\">rate (bits per chunk interval)</text>\n";
  o << "<text x=\"20\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
    << (T + H - B) / 2 << ")\">mean PSNR (dB)</text>\n";
  std::size_t k = 0;
  for (const auto& [scheme, pts] : series) {
    const char* colour = kColours[k % 5];
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      o << (i ? " " : "") << f2(px(static_cast<double>(pts[i].first))) << ',' << f2(py(pts[i].second));
    o << "\"/>\n";
    for (const auto& [x, y] : pts)
      o << "<circle cx=\"" << f2(px(static_cast<double>(x))) << "\" cy=\"" << f2(py(y)) << "\" r=\"3\" fill=\""
        << colour << "\"/>\n";
    const double ly = T + 20.0 * static_cast<double>(k);
    o << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40 << "\" y2=\"" << ly
      << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 45 << "\" y=\"" << ly + 4 << "\">" << to_string(scheme) << "</text>\n";
    ++k;
  }
  o << "</svg>\n";
  return o.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out << content;
}

/// Writes sweep.csv, sweep.svg and frames/*.csv under `dir`.
inline void write_sweep_outputs(const std::filesystem::path& dir, const SweepResult& result) {
  std::filesystem::create_directories(dir / "frames");
  std::ostringstream csv;
  write_sweep_csv(csv, result);
  write_file(dir / "sweep.csv", csv.str());
  write_file(dir / "sweep.svg", sweep_svg(result));
  for (const auto& r : result.rows) {
    if (!r.ok()) continue;
    std::ostringstream pf;
    write_per_frame_csv(pf, r.chunks);
    write_file(dir / r.per_frame_path, pf.str());
  }
}

struct FramesReport {
  std::size_t n_f = 0;
  std::vector<double> proposed;     ///< per-frame PSNR (capped, mean over seeds)
  std::vector<double> upper_bound;  ///< same for the upper-bound scheme
  std::vector<std::vector<double>> proposed_by_seed;
  std::vector<std::filesystem::path> images;
};

/// First chunk of every seed's trace sent with the proposed scheme at a forced
/// n_f. Requested frames (1-based) of the first seed are exported as strips
/// [ground truth | upper bound | proposed].
inline FramesReport frames_report(const ExperimentConfig& config, std::size_t n_f_override,
                                  const std::vector<std::size_t>& export_frames = {},
                                  const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  config.validate();
  const std::size_t n = config.chunk_frames;
  if (n_f_override < config.predictor.window)
    fail(Errc::window_underfull, "frames-report: n_f override " + std::to_string(n_f_override) +
                                     " is below the window " + std::to_string(config.predictor.window));
  if (n_f_override > n) fail(Errc::invalid_argument, "frames-report: n_f override exceeds N");
  for (auto f : export_frames)
    if (f < 1 || f > n) fail(Errc::invalid_argument, "frames-report: frame " + std::to_string(f) + " outside 1..N");

  FramesReport report;
  report.n_f = n_f_override;
  report.proposed.assign(n, 0.0);
  report.upper_bound.assign(n, 0.0);
  if (out_dir) std::filesystem::create_directories(*out_dir);

  for (std::size_t si = 0; si < config.seeds.size(); ++si) {
    const auto seed = config.seeds[si];
    auto trace = experiment_trace(config, seed);
    const auto chunks = chunk_iter(trace, n);
    if (chunks.empty()) fail(Errc::empty_input, "frames-report: trace shorter than one chunk");
    const auto dyn = classify(chunks[0], SelectorConfig{config.delta}).dynamic_set;
    const auto ctx = prepare_seed(config, seed, {Scheme::proposed}, dyn);

    auto options = config.options(config.rates.front());
    options.n_f_override = n_f_override;
    const auto prop = transmit_chunk(chunks[0], Scheme::proposed, options, &*ctx.model, ctx.basis, ctx.truth[0]);
    const auto upper = transmit_chunk(chunks[0], Scheme::upper_bound, options, nullptr, ctx.basis, ctx.truth[0]);
    std::vector<double> capped(n);
    for (std::size_t t = 0; t < n; ++t) {
      capped[t] = std::min(prop.frame_psnr[t], kPsnrCapDb);
      report.proposed[t] += capped[t];
      report.upper_bound[t] += std::min(upper.frame_psnr[t], kPsnrCapDb);
    }
    report.proposed_by_seed.push_back(std::move(capped));

    if (si == 0 && out_dir) {
      for (auto f : export_frames) {
        const ImageFrame strip[] = {ctx.truth[0][f - 1], render(upper.recon.row(f - 1), ctx.basis),
                                    render(prop.recon.row(f - 1), ctx.basis)};
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03zu.ppm", f);
        write_ppm(*out_dir / name, hstack(strip));
        report.images.push_back(*out_dir / name);
      }
    }
  }
  const double seeds = static_cast<double>(config.seeds.size());
  for (std::size_t t = 0; t < n; ++t) {
    report.proposed[t] /= seeds;
    report.upper_bound[t] /= seeds;
  }
  if (out_dir) {
    std::ostringstream csv;
    csv << "frame,proposed_psnr_db,upper_bound_psnr_db,transmitted\n";
    for (std::size_t t = 0; t < n; ++t)
      csv << t + 1 << ',' << text::format_fixed(report.proposed[t], 6) << ','
          << text::format_fixed(report.upper_bound[t], 6) << ',' << (t < n_f_override ? 1 : 0) << '\n';
    write_file(*out_dir / "frames_report.csv", csv.str());
  }
  return report;
}

}  // namespace facelink
