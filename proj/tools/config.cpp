#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "docspot/error.hpp"

namespace docspot::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> list(std::string_view v) {
  std::vector<std::string_view> out;
  while (true) {
    const auto c = v.find(',');
    out.push_back(trim(v.substr(0, c)));
    if (c == std::string_view::npos) break;
    v.remove_prefix(c + 1);
  }
  return out;
}

template <class T>
T number(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  return out;
}

double real(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  }
}

bool flag(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"corpus", [](RunConfig& c, auto, auto v) { c.corpus = std::string(v); }},
      {"gt", [](RunConfig& c, auto, auto v) { c.gt = std::string(v); }},
      {"model", [](RunConfig& c, auto, auto v) { c.model = std::string(v); }},
      {"store", [](RunConfig& c, auto, auto v) { c.store = std::string(v); }},
      {"train_dir", [](RunConfig& c, auto, auto v) { c.train_dir = std::string(v); }},
      {"query_image", [](RunConfig& c, auto, auto v) { c.query_image = std::string(v); }},
      {"out", [](RunConfig& c, auto, auto v) { c.out = std::string(v); }},

      {"block", [](RunConfig& c, auto k, auto v) { c.proposal.block = number<int>(k, v); }},
      {"offset", [](RunConfig& c, auto k, auto v) { c.proposal.offset = real(k, v); }},
      {"scales", [](RunConfig& c, auto k, auto v) {
         c.proposal.scales.clear();
         for (auto s : list(v)) c.proposal.scales.push_back(real(k, s));
       }},
      {"min_region_px", [](RunConfig& c, auto k, auto v) { c.proposal.min_region_px = number<std::int64_t>(k, v); }},
      {"max_proposals", [](RunConfig& c, auto k, auto v) { c.proposal.max_proposals = number<std::size_t>(k, v); }},
      {"weights", [](RunConfig& c, auto k, auto v) {
         const auto w = list(v);
         if (w.size() != 4) throw ConfigError("weights needs four values: color,texture,size,fill");
         c.proposal.weights = {real(k, w[0]), real(k, w[1]), real(k, w[2]), real(k, w[3])};
       }},

      {"lr0", [](RunConfig& c, auto k, auto v) { c.train.lr0 = real(k, v); }},
      {"decay", [](RunConfig& c, auto k, auto v) { c.train.decay = real(k, v); }},
      {"epochs", [](RunConfig& c, auto k, auto v) { c.train.epochs = number<int>(k, v); }},
      {"batch", [](RunConfig& c, auto k, auto v) { c.train.batch = number<std::size_t>(k, v); }},
      {"momentum", [](RunConfig& c, auto k, auto v) { c.train.momentum = real(k, v); }},
      {"neg_ratio", [](RunConfig& c, auto k, auto v) { c.train.neg_ratio = real(k, v); }},
      {"split", [](RunConfig& c, auto k, auto v) { c.train.split = real(k, v); }},
      {"verify_gradients", [](RunConfig& c, auto k, auto v) { c.train.verify_gradients = flag(k, v); }},
      {"embed_dim", [](RunConfig& c, auto k, auto v) { c.embed_dim = number<std::uint32_t>(k, v); }},
      {"per_category", [](RunConfig& c, auto k, auto v) { c.per_category = number<int>(k, v); }},

      {"pages", [](RunConfig& c, auto k, auto v) { c.pages = number<int>(k, v); }},
      {"plants", [](RunConfig& c, auto k, auto v) { c.plants = number<int>(k, v); }},
      {"text_lines", [](RunConfig& c, auto k, auto v) { c.text_lines = number<int>(k, v); }},

      {"query_box", [](RunConfig& c, auto k, auto v) {
         const auto f = list(v);
         if (f.size() != 4) throw ConfigError("query_box needs x,y,w,h");
         try {
           c.query_box = BBox(number<std::int64_t>(k, f[0]), number<std::int64_t>(k, f[1]),
                              number<std::int64_t>(k, f[2]), number<std::int64_t>(k, f[3]));
         } catch (const ParameterError& e) {
           throw ConfigError(std::string("query_box: ") + e.what());
         }
       }},
      {"topk", [](RunConfig& c, auto k, auto v) {
         const auto f = list(v);
         c.topk_set.clear();
         for (auto s : f) c.topk_set.push_back(number<std::size_t>(k, s));
         c.topk = c.topk_set.front();
       }},
      {"iou", [](RunConfig& c, auto k, auto v) {
         c.iou_grid.clear();
         for (auto s : list(v)) c.iou_grid.push_back(real(k, s));
       }},
      {"gate", [](RunConfig& c, auto k, auto v) { c.gate = (v == "off") ? 0.0 : real(k, v); }},
      {"mode", [](RunConfig& c, auto, auto v) {
         if (v == "retrieval") c.mode = SearchMode::Retrieval;
         else if (v == "spotting") c.mode = SearchMode::Spotting;
         else throw ConfigError("mode must be retrieval or spotting");
       }},

      {"bench_dims", [](RunConfig& c, auto k, auto v) {
         c.bench_dims.clear();
         for (auto s : list(v)) c.bench_dims.push_back(number<std::uint32_t>(k, s));
       }},
      {"bench_records", [](RunConfig& c, auto k, auto v) { c.bench_records = number<std::size_t>(k, v); }},
      {"bench_queries", [](RunConfig& c, auto k, auto v) { c.bench_queries = number<std::size_t>(k, v); }},
      {"bench_repeats", [](RunConfig& c, auto k, auto v) { c.bench_repeats = number<int>(k, v); }},

      {"seed", [](RunConfig& c, auto k, auto v) { c.seed = number<std::uint64_t>(k, v); }},
      {"threads", [](RunConfig& c, auto k, auto v) { c.threads = number<unsigned>(k, v); }},
  };
  return table;
}

}  // namespace

std::optional<AspectGate> RunConfig::aspect_gate() const {
  if (gate == 0.0) return std::nullopt;
  try {
    return AspectGate(gate);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("gate: ") + e.what());
  }
}

void apply(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, trim(value));
}

std::pair<std::string, std::string> split_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(text) + "'");
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

void load_config(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    try {
      const auto [k, v] = split_assignment(body);
      apply(cfg, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace docspot::cli
