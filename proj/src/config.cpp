#include "starvqa/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "starvqa/errors.hpp"

namespace starvqa {

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }
std::string_view to_string(DecoderMode m) { return m == DecoderMode::expectation ? "expectation" : "linear-fit"; }

void EncoderConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(frames >= 1, "frames must be >= 1");
  need(patch >= 1, "patch must be >= 1");
  need(height >= patch && width >= patch, "patch larger than the crop");
  need(dim >= 1 && heads >= 1, "dim and heads must be >= 1");
  need(dim % heads == 0, "dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
  need(blocks >= 1, "blocks must be >= 1");
}

EncoderConfig EncoderConfig::tiny() {
  EncoderConfig c;
  c.frames = 2;
  c.height = 8;
  c.width = 8;
  c.patch = 4;
  c.dim = 8;
  c.heads = 2;
  c.blocks = 2;
  return c;
}

std::size_t parameter_count(const EncoderConfig& c) {
  const std::size_t d = c.dim;
  const std::size_t embed = d * c.patch_length() + c.tokens() * d + d;
  const std::size_t pass = 4 * d * d + 2 * d;  // W_Q, W_K, W_V, W_O + layernorm
  const std::size_t mlp = 2 * d + 2 * d * c.mlp_width() + c.mlp_width() + d;
  const std::size_t head = d * c.head_width() + c.head_width() + 6 * c.head_width() + 6;
  return embed + c.blocks * (2 * pass + mlp) + head;
}

void TrainConfig::validate() const {
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("split must be in (0,1)");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (rounds == 0) throw ConfigError("rounds must be >= 1");
  if (lr < 0) throw ConfigError("lr must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must be in [0,1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
  if (!(init_std >= 0)) throw ConfigError("init_std must be >= 0");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end)
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  auto& e = encoder;
  auto& t = train;
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  if (key == "frames") e.frames = size();
  else if (key == "height") e.height = size();
  else if (key == "width") e.width = size();
  else if (key == "patch") e.patch = size();
  else if (key == "dim") e.dim = size();
  else if (key == "heads") e.heads = size();
  else if (key == "blocks") e.blocks = size();
  else if (key == "mlp_hidden") e.mlp_hidden = size();
  else if (key == "head_hidden") e.head_hidden = size();
  else if (key == "epochs") t.epochs = size();
  else if (key == "batch_size") t.batch_size = size();
  else if (key == "lr") t.lr = real();
  else if (key == "beta1") t.beta1 = real();
  else if (key == "beta2") t.beta2 = real();
  else if (key == "adam_eps") t.adam_eps = real();
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "split") t.split = real();
  else if (key == "rounds") t.rounds = size();
  else if (key == "init_std") t.init_std = real();
  else if (key == "precision") {
    if (value == "f32") t.precision = Precision::f32;
    else if (value == "f64") t.precision = Precision::f64;
    else throw ConfigError("precision must be f32 or f64");
  } else if (key == "decoder") {
    if (value == "expectation") t.decoder = DecoderMode::expectation;
    else if (value == "linear-fit") t.decoder = DecoderMode::linear_fit;
    else throw ConfigError("decoder must be expectation or linear-fit");
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& err) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  cfg.encoder.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::to_text() const {
  const auto& e = encoder;
  const auto& t = train;
  std::ostringstream out;
  out << "frames = " << e.frames << "\n"
      << "height = " << e.height << "\n"
      << "width = " << e.width << "\n"
      << "patch = " << e.patch << "\n"
      << "dim = " << e.dim << "\n"
      << "heads = " << e.heads << "\n"
      << "blocks = " << e.blocks << "\n"
      << "mlp_hidden = " << e.mlp_width() << "\n"
      << "head_hidden = " << e.head_width() << "\n"
      << "epochs = " << t.epochs << "\n"
      << "batch_size = " << t.batch_size << "\n"
      << "lr = " << format_double(t.lr) << "\n"
      << "beta1 = " << format_double(t.beta1) << "\n"
      << "beta2 = " << format_double(t.beta2) << "\n"
      << "adam_eps = " << format_double(t.adam_eps) << "\n"
      << "seed = " << t.seed << "\n"
      << "split = " << format_double(t.split) << "\n"
      << "rounds = " << t.rounds << "\n"
      << "init_std = " << format_double(t.init_std) << "\n"
      << "precision = " << to_string(t.precision) << "\n"
      << "decoder = " << to_string(t.decoder) << "\n";
  return out.str();
}

}  // namespace starvqa
