#include "starvqa/commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <optional>

#include "starvqa/checkpoint.hpp"
#include "starvqa/errors.hpp"
#include "starvqa/evaluator.hpp"
#include "starvqa/kernels.hpp"
#include "starvqa/synthetic.hpp"
#include "starvqa/trainer.hpp"

namespace starvqa {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Options {
  std::string config, manifest, checkpoint, out, frames_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  std::optional<std::size_t> frames;
  double mos = 0, lo = 0, hi = 5;
  std::size_t clips = 8, size = 16;
};

RunConfig effective_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (o.precision) cfg.set("precision", *o.precision);
  if (o.frames) cfg.set("frames", std::to_string(*o.frames));
  cfg.encoder.validate();
  cfg.train.validate();
  return cfg;
}

template <typename T>
int train(const Options& o, const RunConfig& cfg, std::ostream& out) {
  const auto manifest = Manifest::load(o.manifest);
  const std::filesystem::path ckpt_path = o.out;
  const auto log_path = std::filesystem::path(o.out + ".log");
  std::ofstream log(log_path);
  if (!log) throw InputError(log_path.string() + ": cannot open for writing");
  auto result = fit<T>(manifest, cfg, [&](const EpochLog& e) {
    const auto line = format_log_line(e);
    log << line << '\n';
    out << line << '\n';
  });
  Checkpoint<T> ckpt{cfg, std::move(result.model), std::move(result.optimizer), cfg.train.epochs,
                     std::move(result.step_losses)};
  to_file(ckpt).save(ckpt_path);
  out << "train videos " << result.train_indices.size() << ", test videos " << result.test_indices.size() << '\n';
  if (result.mean_srocc)
    out << "mean srocc " << num(*result.mean_srocc) << " plcc " << num(*result.mean_plcc) << '\n';
  out << "wrote " << ckpt_path.string() << '\n';
  return kExitOk;
}

template <typename T>
int predict_cmd(const CheckpointFile& file, const Options& o, std::ostream& out) {
  const auto ckpt = from_file<T>(file);
  const auto& ec = ckpt.config.encoder;
  const auto store = FrameStore::open(o.frames_dir);
  const auto video = load_sampled(store, ec.frames, o.frames_dir);
  const auto& f = video.frames.front();
  if (f.height < ec.height || f.width < ec.width)
    throw InputError(o.frames_dir + ": frames smaller than the " + std::to_string(ec.width) + "x" +
                     std::to_string(ec.height) + " crop");
  const auto clip = make_clip(video, ec.height, ec.width, center_crop_offset(f.height, f.width, ec.height, ec.width));
  const auto y = predict(ckpt.model, patchify<T>(clip, ec.patch));
  out << "score " << num(decode_score(y, ckpt.config.train.decoder, ckpt.model.decoder)) << '\n';
  out << "probabilities";
  for (double p : y) out << ' ' << num(p);
  out << '\n';
  return kExitOk;
}

template <typename T>
int evaluate_cmd(const CheckpointFile& file, const Options& o, std::ostream& out, std::ostream& err) {
  const auto ckpt = from_file<T>(file);
  const auto manifest = Manifest::load(o.manifest);
  std::vector<std::size_t> all(manifest.entries.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto report = evaluate(ckpt.model, manifest, all, ckpt.config.train.decoder);
  for (const auto& f : report.failures) err << "skipped " << f << '\n';
  const std::string scatter = o.out.empty() ? o.checkpoint + ".scatter.csv" : o.out;
  write_scatter(scatter, report);
  out << "videos " << report.records.size() << '\n';
  if (!report.srocc) {
    err << "error: " << report.metric_error << '\n';
    return kExitNumeric;
  }
  out << "srocc " << num(*report.srocc) << '\n' << "plcc " << num(*report.plcc) << '\n';
  out << "wrote " << scatter << '\n';
  return kExitOk;
}

template <typename F>
int with_checkpoint(const Options& o, F&& body) {
  const auto file = CheckpointFile::load(o.checkpoint);
  if (stored_precision(file) == Precision::f32) return body(file, float{});
  return body(file, double{});
}

void apply_thread_env() {
  if (const char* env = std::getenv("SVQA_THREADS")) {
    int n = 0;
    const std::string_view s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), n);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || n < 1)
      throw ConfigError("SVQA_THREADS must be a positive integer, got '" + std::string(s) + "'");
    kernels::set_thread_limit(n);
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Divided space-time attention video quality model"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--precision", o.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
    sub->add_option("--frames", o.frames, "frames sampled per video");
  };

  auto* train_cmd = app.add_subcommand("train", "fit a model and write a checkpoint plus <out>.log");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", o.manifest)->required();
  train_cmd->add_option("--out", o.out, "checkpoint path")->required();

  auto* predict = app.add_subcommand("predict", "score one frame directory");
  predict->add_option("--checkpoint", o.checkpoint)->required();
  predict->add_option("frames_dir", o.frames_dir)->required();

  auto* evaluate_sub = app.add_subcommand("evaluate", "SROCC/PLCC over a manifest and a scatter file");
  evaluate_sub->add_option("--checkpoint", o.checkpoint)->required();
  evaluate_sub->add_option("--manifest", o.manifest)->required();
  evaluate_sub->add_option("--out", o.out, "scatter file (default <checkpoint>.scatter.csv)");

  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients (f64)");
  add_common(gradcheck);

  auto* encode = app.add_subcommand("encode", "quality vector of a MOS");
  encode->add_option("--mos", o.mos)->required();
  encode->add_option("--lo", o.lo, "scale minimum")->capture_default_str();
  encode->add_option("--hi", o.hi, "scale maximum")->capture_default_str();

  auto* describe = app.add_subcommand("describe", "print the effective configuration");
  add_common(describe);
  describe->add_option("--checkpoint", o.checkpoint, "print the configuration stored in a checkpoint");

  auto* synth = app.add_subcommand("synth", "write the procedural degradation-ladder dataset");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--seed", o.seed);
  synth->add_option("--frames", o.frames, "frames per clip");
  synth->add_option("--clips", o.clips)->capture_default_str();
  synth->add_option("--size", o.size, "frame height and width")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    apply_thread_env();
    if (*train_cmd) {
      const auto cfg = effective_config(o);
      return cfg.train.precision == Precision::f32 ? train<float>(o, cfg, out) : train<double>(o, cfg, out);
    }
    if (*predict) {
      return with_checkpoint(o, [&](const CheckpointFile& f, auto tag) {
        return predict_cmd<decltype(tag)>(f, o, out);
      });
    }
    if (*evaluate_sub) {
      return with_checkpoint(o, [&](const CheckpointFile& f, auto tag) {
        return evaluate_cmd<decltype(tag)>(f, o, out, err);
      });
    }
    if (*gradcheck) {
      if (o.precision && *o.precision != "f64") throw ConfigError("gradcheck runs in f64 only");
      auto cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
      if (o.config.empty()) cfg.encoder = EncoderConfig::tiny();
      if (o.frames) cfg.set("frames", std::to_string(*o.frames));
      cfg.encoder.validate();
      const auto& ec = cfg.encoder;
      const auto report = grad_check(ec, o.seed.value_or(0));
      for (const auto& t : report.tensors)
        out << t.name << ' ' << num(t.max_rel_error) << (t.max_rel_error < report.tolerance ? "" : " FAIL") << '\n';
      out << "max relative error " << num(report.max_rel_error) << '\n';
      if (!report.passed()) {
        err << "gradient check failed for:";
        for (const auto& t : report.tensors)
          if (t.max_rel_error >= report.tolerance) err << ' ' << t.name;
        err << '\n';
        return kExitNumeric;
      }
      return kExitOk;
    }
    if (*encode) {
      const double scaled = scale_mos(o.mos, MosScale{o.lo, o.hi});
      const auto q = encode_mos(scaled);
      for (std::size_t k = 0; k < q.size(); ++k) out << (k ? " " : "") << num(q[k]);
      out << '\n';
      return kExitOk;
    }
    if (*describe) {
      if (!o.checkpoint.empty()) {
        out << CheckpointFile::load(o.checkpoint).config_text;
        return kExitOk;
      }
      out << effective_config(o).to_text();
      return kExitOk;
    }
    if (*synth) {
      SyntheticSpec spec;
      spec.clips = o.clips;
      spec.height = spec.width = o.size;
      if (o.frames) spec.frames = *o.frames;
      if (o.seed) spec.seed = *o.seed;
      const auto manifest = make_synthetic(spec, o.out);
      out << "wrote " << manifest.entries.size() << " clips to " << o.out << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace starvqa
