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

// facelink command-line driver. Every subcommand maps onto one library
// operation; failures print "error: <category>: <message>" on stderr and
// exit with facelink::exit_code(category).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "facelink/facelink.hpp"

namespace fs = std::filesystem;
using namespace facelink;

namespace {

/// Flags shared by the experiment-style subcommands.
struct Overrides {
  std::string config = "default";
  std::optional<std::string> trace;
  std::optional<double> rate;
  std::vector<double> rates;
  std::optional<double> latency_ms;
  std::optional<unsigned> q_bits;
  std::optional<double> delta;
  std::optional<std::size_t> window;
  std::optional<std::size_t> chunk_frames;
  std::vector<std::string> schemes;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> out;
  bool upper_bound_exact = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "config file path, or 'default'");
    app->add_option("--trace", trace, "coefficient CSV (default: synthetic per config)");
    app->add_option("--rate", rate, "link rate in bit/s");
    app->add_option("--rates", rates, "link rates in bit/s")->delimiter(',');
    app->add_option("--latency-ms", latency_ms, "latency budget tau in milliseconds");
    app->add_option("--q-bits", q_bits, "bits per coefficient Q");
    app->add_option("--delta", delta, "variance threshold");
    app->add_option("--window", window, "predictor window d");
    app->add_option("--chunk-frames", chunk_frames, "frames per chunk N");
    app->add_option("--scheme", schemes, "scheme name(s)")->delimiter(',');
    app->add_option("--seed", seeds, "seed(s)")->delimiter(',');
    app->add_option("--out", out, "output path");
    app->add_flag("--upper-bound-exact", upper_bound_exact, "upper bound skips quantization");
  }

  ExperimentConfig resolve() const {
    auto c = load_config(config);
    if (trace) c.trace = *trace;
    if (rate) c.rates = {*rate};
    if (!rates.empty()) c.rates = rates;
    if (latency_ms) c.latency_ms = *latency_ms;
    if (q_bits) c.q_bits = *q_bits;
    if (delta) c.delta = *delta;
    if (window) c.predictor.window = *window;
    if (chunk_frames) c.chunk_frames = *chunk_frames;
    if (!schemes.empty()) {
      c.schemes.clear();
      for (const auto& s : schemes) c.schemes.push_back(parse_scheme(s));
    }
    if (!seeds.empty()) c.seeds = seeds;
    if (out) c.out = *out;
    if (upper_bound_exact) c.upper_bound_exact = true;
    c.validate();
    return c;
  }
};

void write_codes(const fs::path& path, const std::vector<std::uint32_t>& frame1,
                 const std::vector<std::uint32_t>& dynamic) {
  std::ostringstream o;
  o << "codes " << frame1.size() + dynamic.size() << '\n';
  for (auto c : frame1) o << c << '\n';
  for (auto c : dynamic) o << c << '\n';
  write_file(path, o.str());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_results_csv(const fs::path& path, const std::vector<ChunkResult>& results) {
  std::ostringstream o;
  o << "chunk_id,scheme,n_f,m_dyn,payload_bits,budget_bits,budget_exempt,mean_psnr_db,coeff_mse\n";
  for (const auto& r : results)
    o << r.chunk_id << ',' << to_string(r.scheme) << ',' << r.n_f << ',' << r.m_dyn << ',' << r.payload_bits
      << ',' << r.budget_bits << ',' << (r.budget_exempt ? 1 : 0) << ',' << text::format_fixed(r.mean_psnr, 6)
      << ',' << text::format_double(r.coeff_mse) << '\n';
  write_file(path, o.str());
}

std::uint64_t first_seed(const ExperimentConfig& c) { return c.seeds.front(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facelink: rate-constrained expression-coefficient streaming simulator"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic coefficient trace");
  Overrides synth_o;
  synth_o.attach(synth);
  std::optional<std::size_t> synth_features, synth_frames;
  std::optional<double> synth_static;
  synth->add_option("--features", synth_features, "number of coefficients M");
  synth->add_option("--frames", synth_frames, "number of frames T");
  synth->add_option("--static-fraction", synth_static, "fraction of constant coefficients");

  // train
  auto* train_cmd = app.add_subcommand("train", "train per-coefficient predictors");
  Overrides train_o;
  train_o.attach(train_cmd);
  std::vector<std::size_t> train_features;
  train_cmd->add_option("--features", train_features, "coefficient indices (default: all)")->delimiter(',');

  // pack
  auto* pack = app.add_subcommand("pack", "encode one chunk into a packet");
  Overrides pack_o;
  pack_o.attach(pack);
  std::size_t pack_chunk_index = 0;
  std::optional<std::string> pack_codes;
  std::optional<std::size_t> pack_nf;
  pack->add_option("--chunk", pack_chunk_index, "chunk index");
  pack->add_option("--codes", pack_codes, "also dump the quantized codes here");
  pack->add_option("--n-f", pack_nf, "force n_f instead of planning it from the budget");

  // unpack
  auto* unpack = app.add_subcommand("unpack", "decode a packet");
  std::string unpack_in;
  std::optional<std::string> unpack_codes, unpack_out;
  unpack->add_option("--in", unpack_in, "packet file")->required();
  unpack->add_option("--codes", unpack_codes, "dump the decoded codes here");
  unpack->add_option("--out", unpack_out, "write dequantized received values as CSV");

  // run
  auto* run = app.add_subcommand("run", "stream a trace through one scheme");
  Overrides run_o;
  run_o.attach(run);
  std::optional<std::string> run_model;
  run->add_option("--model", run_model, "pre-trained predictor file");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "rate x scheme x seed sweep with CSV and SVG output");
  Overrides sweep_o;
  sweep_o.attach(sweep_cmd);

  // frames-report
  auto* frames = app.add_subcommand("frames-report", "per-frame PSNR with a forced n_f");
  Overrides frames_o;
  frames_o.attach(frames);
  std::size_t frames_nf = 0;
  std::vector<std::size_t> frames_list;
  frames->add_option("--n-f", frames_nf, "forced number of transmitted frames")->required();
  frames->add_option("--frames", frames_list, "1-based frames to export as images")->delimiter(',');

  // render
  auto* render_cmd = app.add_subcommand("render", "render one trace frame to PPM");
  Overrides render_o;
  render_o.attach(render_cmd);
  std::size_t render_frame = 0;
  render_cmd->add_option("--frame", render_frame, "0-based frame index in the trace");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return exit_code(Errc::usage);
  }

  try {
    if (*synth) {
      auto c = synth_o.resolve();
      auto spec = c.synth;
      if (synth_features) spec.features = *synth_features;
      if (synth_frames) spec.frames = *synth_frames;
      if (synth_static) spec.static_fraction = *synth_static;
      spec.seed = first_seed(c);
      if (!synth_o.out) fail(Errc::usage, "synth requires --out");
      save_trace(*synth_o.out, synth_trace(spec));
      std::cout << "wrote " << *synth_o.out << " (" << spec.frames << " frames, " << spec.features
                << " features)\n";
    } else if (*train_cmd) {
      auto c = train_o.resolve();
      if (!train_o.out) fail(Errc::usage, "train requires --out");
      const auto trace = experiment_trace(c, first_seed(c));
      if (train_features.empty())
        for (std::size_t m = 0; m < trace.features(); ++m) train_features.push_back(m);
      auto pc = c.predictor;
      pc.seed = mix_seed(first_seed(c), 2);
      const auto model = train(trace, train_features, pc);
      save_model(*train_o.out, model);
      double val = 0.0;
      for (const auto& f : model.features) val += f.validation_mse;
      std::cout << "trained " << model.features.size() << " predictors, mean validation MSE "
                << text::format_double(val / static_cast<double>(model.features.size())) << '\n';
    } else if (*pack) {
      auto c = pack_o.resolve();
      if (!pack_o.out) fail(Errc::usage, "pack requires --out");
      const auto trace = experiment_trace(c, first_seed(c));
      const auto chunks = chunk_iter(trace, c.chunk_frames);
      if (pack_chunk_index >= chunks.size())
        fail(Errc::invalid_argument, "chunk index " + std::to_string(pack_chunk_index) + " out of range");
      const auto& chunk = chunks[pack_chunk_index];
      const Scheme scheme = c.schemes.size() == 1 ? c.schemes.front() : Scheme::proposed;
      const auto report = scheme == Scheme::proposed ? classify(chunk, SelectorConfig{c.delta}) : select_all(chunk);
      ChunkPlan plan;
      if (pack_nf)
        plan = ChunkPlan{*pack_nf, chunk.features(), report.m_dyn(), c.q_bits};
      else if (scheme == Scheme::upper_bound)
        plan = ChunkPlan{chunk.frames(), chunk.features(), report.m_dyn(), c.q_bits};
      else
        plan = plan_frames(c.budget(c.rates.front()), c.quant(), chunk.features(), report.m_dyn(), chunk.frames());
      const auto packet = pack_chunk(chunk, report, plan, c.quant());
      write_file(*pack_o.out, std::string(packet.bytes.begin(), packet.bytes.end()));
      if (pack_codes) {
        const auto rx = unpack_chunk(packet.bytes);
        write_codes(*pack_codes, rx.frame1_codes, rx.dynamic_codes);
      }
      std::cout << "chunk " << chunk.chunk_id() << ": n_f=" << plan.n_f << " m_dyn=" << plan.m_dyn
                << " payload_bits=" << packet.payload_bits << " packet_bytes=" << packet.bytes.size() << '\n';
    } else if (*unpack) {
      const auto bytes = read_bytes(unpack_in);
      const auto rx = unpack_chunk(bytes);
      if (unpack_codes) write_codes(*unpack_codes, rx.frame1_codes, rx.dynamic_codes);
      if (unpack_out) {
        std::ostringstream o;
        o << "frame";
        for (std::size_t m = 0; m < rx.features(); ++m) o << ",e_" << m;
        o << '\n';
        for (std::size_t t = 0; t < rx.n_f(); ++t) {
          o << t;
          for (std::size_t m = 0; m < rx.features(); ++m) {
            o << ',';
            const auto it = std::lower_bound(rx.dynamic_indices.begin(), rx.dynamic_indices.end(), m);
            const bool dyn = it != rx.dynamic_indices.end() && *it == m;
            const double v = (t == 0 || !dyn) ? rx.frame1[m]
                                              : rx.dynamic(t - 1, static_cast<std::size_t>(it - rx.dynamic_indices.begin()));
            o << text::format_double(v);
          }
          o << '\n';
        }
        write_file(*unpack_out, o.str());
      }
      std::cout << "chunk " << rx.header.chunk_id << ": N=" << rx.n() << " n_f=" << rx.n_f() << " M=" << rx.features()
                << " m_dyn=" << rx.m_dyn() << " Q=" << unsigned{rx.header.q_bits} << '\n';
    } else if (*run) {
      auto c = run_o.resolve();
      const fs::path out = c.out;
      fs::create_directories(out);
      const Scheme scheme = c.schemes.size() == 1 ? c.schemes.front() : Scheme::proposed;
      const auto seed = first_seed(c);
      auto ctx = prepare_seed(c, seed, run_model ? std::vector<Scheme>{Scheme::upper_bound} : std::vector<Scheme>{scheme});
      if (run_model) ctx.model = load_model(*run_model);
      auto results = run_stream(ctx.trace, scheme, StreamConfig{c.chunk_frames, c.options(c.rates.front())},
                                ctx.model ? &*ctx.model : nullptr, ctx.basis, &ctx.truth);
      write_results_csv(out / "results.csv", results);
      std::ostringstream pf;
      write_per_frame_csv(pf, results);
      write_file(out / "per_frame.csv", pf.str());
      std::cout << "wrote " << (out / "results.csv").string() << " (" << results.size() << " chunks)\n";
    } else if (*sweep_cmd) {
      auto c = sweep_o.resolve();
      const auto result = sweep(c);
      write_sweep_outputs(c.out, result);
      std::cout << "wrote " << result.rows.size() << " rows to " << (fs::path(c.out) / "sweep.csv").string() << '\n';
    } else if (*frames) {
      auto c = frames_o.resolve();
      const auto report = frames_report(c, frames_nf, frames_list, fs::path(c.out));
      std::cout << "wrote " << (fs::path(c.out) / "frames_report.csv").string() << " and "
                << report.images.size() << " images\n";
    } else if (*render_cmd) {
      auto c = render_o.resolve();
      if (!render_o.out) fail(Errc::usage, "render requires --out");
      const auto trace = experiment_trace(c, first_seed(c));
      if (render_frame >= trace.frames())
        fail(Errc::invalid_argument, "frame " + std::to_string(render_frame) + " out of range");
      const auto basis = make_basis(c.image_height, c.image_width, trace.features(), mix_seed(first_seed(c), 1));
      write_ppm(*render_o.out, render(trace.values().row(render_frame), basis));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
