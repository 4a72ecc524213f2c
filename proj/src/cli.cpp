#include "visforge/cli.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "visforge/config.hpp"
#include "visforge/digest.hpp"
#include "visforge/driver.hpp"
#include "visforge/exporter.hpp"
#include "visforge/parallel.hpp"
#include "visforge/store.hpp"

namespace visforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return kConfigError;
    case ErrorCode::Timeout:
    case ErrorCode::TransportError:
      return kBackendFailure;
    case ErrorCode::IoError:
      return kFailure;
    default:
      return kSchemaViolation;
  }
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
  }
  fs::rename(tmp, path);
}

std::vector<std::pair<size_t, std::string>> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::pair<size_t, std::string>> out;
  std::string line;
  for (size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.emplace_back(n, line);
  }
  return out;
}

json parse_line(const fs::path& file, size_t lineno, const std::string& line) {
  auto j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::SchemaError, file.filename().string() + ":" + std::to_string(lineno) + ": not a JSON object");
  }
  return j;
}

std::string field(const json& j, const char* key, const fs::path& file, size_t lineno) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorCode::SchemaError,
                file.filename().string() + ":" + std::to_string(lineno) + ": missing string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

ImagePtr load_input_image(const fs::path& base, const std::string& rel, const fs::path& file, size_t lineno) {
  fs::path p(rel);
  if (p.is_relative()) p = base / p;
  try {
    return make_original(load_image(p));
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaError, file.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

// Scoped SIGINT hook; the previous disposition is restored on exit.
class InterruptScope {
 public:
  InterruptScope() {
    interrupt_flag() = false;
    previous_ = std::signal(SIGINT, [](int) { interrupt_flag() = true; });
  }
  ~InterruptScope() { std::signal(SIGINT, previous_); }

 private:
  void (*previous_)(int) = SIG_DFL;
};

template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    log << "visforge: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    log << "visforge: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

json RunManifest::to_json() const {
  return {{"format", "visforge-run/1"}, {"command", command},   {"config", config},
          {"inputs", inputs},           {"outputs", outputs},   {"seed", seed},
          {"started", started},         {"finished", finished}, {"input_records", input_records},
          {"counters", counters},       {"interrupted", interrupted}};
}

std::vector<SeedTriplet> load_seeds(const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  std::vector<SeedTriplet> seeds;
  for (const auto& [n, line] : read_lines(path)) {
    const json j = parse_line(path, n, line);
    SeedTriplet s;
    s.question = field(j, "question", path, n);
    s.ground_truth = field(j, "answer", path, n);
    s.image = load_input_image(base, field(j, "image", path, n), path, n);
    s.source = j.value("source", std::string("default"));
    s.subtask = j.value("subtask", std::string());
    seeds.push_back(std::move(s));
  }
  return seeds;
}

std::vector<EvalItem> load_eval(const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  std::vector<EvalItem> items;
  for (const auto& [n, line] : read_lines(path)) {
    const json j = parse_line(path, n, line);
    EvalItem it;
    it.id = j.value("id", std::to_string(items.size()));
    it.question = field(j, "question", path, n);
    it.reference = field(j, "answer", path, n);
    it.image = load_input_image(base, field(j, "image", path, n), path, n);
    items.push_back(std::move(it));
  }
  return items;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const GenerateArgs& args, std::ostream& log) {
  return guarded(log, [&]() -> int {
    RunManifest m;
    m.command = "generate";
    m.started = utc_now();
    AppConfig cfg = load_config(args.config);
    if (!cfg.generation) throw Error(ErrorCode::ConfigError, "config has no generation section");
    GenConfig gen = *cfg.generation;
    if (args.budget) gen.budget = parse_budget(*args.budget);
    const int workers = args.workers.value_or(cfg.workers);
    if (workers < 1) throw Error(ErrorCode::ConfigError, "--workers must be >= 1");
    m.seed = args.seed.value_or(cfg.seed);
    m.config = cfg.snapshot;
    m.config["effective"] = {{"budget", budget_to_json(gen.budget)}, {"workers", workers},
                             {"template_hash", gen.templates.hash()}};

    const auto seeds = load_seeds(args.seeds);
    m.input_records = seeds.size();
    m.inputs = {{"seeds", fs::absolute(args.seeds).string()}, {"config", fs::absolute(args.config).string()}};
    const auto pipeline = GenerationPipeline::from_config(gen, workers);

    fs::create_directories(args.out);
    const ImageStore store(args.out / "images");
    InterruptScope scope;
    const auto results = generate_all(pipeline, seeds, workers, &interrupt_flag());

    std::string accepted;
    std::string rejected;
    size_t n_acc = 0, n_rej = 0, n_err = 0;
    for (size_t i = 0; i < results.size(); ++i) {
      if (!results[i]) continue;
      if (const auto* s = std::get_if<VerifiedSample>(&*results[i])) {
        store.put_chain(s->chain);
        accepted += sample_to_json(*s).dump() + "\n";
        ++n_acc;
        continue;
      }
      const auto& r = std::get<Rejection>(*results[i]);
      (r.backend_failure ? n_err : n_rej)++;
      rejected += json{{"index", i},
                       {"sample_id", make_sample_id(seeds[i])},
                       {"source", seeds[i].source},
                       {"question", seeds[i].question},
                       {"reason", r.reason},
                       {"attempts", r.attempts},
                       {"errored", r.backend_failure}}
                      .dump() +
                  "\n";
    }
    write_file(args.out / "accepted.jsonl", accepted);
    write_file(args.out / "rejected.jsonl", rejected);

    m.interrupted = interrupt_flag().load();
    m.counters = {{"accepted", n_acc}, {"rejected", n_rej}, {"errored", n_err}};
    m.outputs = {{"accepted", "accepted.jsonl"}, {"rejected", "rejected.jsonl"}, {"images", "images"}};
    m.finished = utc_now();
    write_file(args.out / "run_manifest.json", m.to_json().dump(2) + "\n");
    log << "generate: accepted=" << n_acc << " rejected=" << n_rej << " errored=" << n_err
        << (m.interrupted ? " (interrupted)" : "") << "\n";
    if (m.interrupted) return kInterrupted;
    return n_err > 0 ? kBackendFailure : kOk;
  });
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

int cmd_export(const ExportArgs& args, std::ostream& log) {
  return guarded(log, [&]() -> int {
    RunManifest m;
    m.command = "export";
    m.started = utc_now();
    ExportSettings settings;
    std::uint64_t seed = 0;
    if (args.config) {
      const AppConfig cfg = load_config(*args.config);
      settings = cfg.export_settings;
      seed = cfg.seed;
      m.config = cfg.snapshot;
    }
    if (args.convention) settings.convention = convention_from_string(*args.convention);
    if (args.quotas) settings.quotas = *args.quotas;
    if (args.total) settings.total = *args.total;
    m.seed = args.seed.value_or(seed);

    const fs::path records = fs::is_directory(args.samples) ? args.samples / "accepted.jsonl" : args.samples;
    const fs::path in_images = records.parent_path() / "images";
    std::vector<VerifiedSample> samples;
    std::vector<Candidate> candidates;
    for (const auto& [n, line] : read_lines(records)) {
      const std::string where = records.filename().string() + ":" + std::to_string(n);
      const json j = parse_line(records, n, line);
      try {
        samples.push_back(sample_from_json(j));
      } catch (const Error& e) {
        throw Error(ErrorCode::SchemaError, where + " (" + j.value("sample_id", std::string("?")) + "): " + e.what());
      }
      const auto& s = samples.back();
      candidates.push_back({s.sample_id, s.source, s.subtask});
    }
    m.input_records = samples.size();

    CurationManifest cm;
    if (settings.quotas) {
      std::ifstream qin(*settings.quotas);
      if (!qin) throw Error(ErrorCode::ConfigError, "cannot open quota file " + settings.quotas->string());
      const json qj = json::parse(qin, nullptr, false);
      if (qj.is_discarded()) throw Error(ErrorCode::ConfigError, "quota file is not JSON");
      const auto quotas = quotas_from_json(qj);
      size_t eligible = 0;
      for (const auto& c : candidates) {
        for (const auto& q : quotas) {
          if (q.source == c.source &&
              std::find(q.exclusions.begin(), q.exclusions.end(), c.subtask) == q.exclusions.end()) {
            ++eligible;
          }
        }
      }
      cm = sample_corpus(candidates, quotas, settings.total.value_or(eligible), m.seed);
    } else {
      cm.seed = m.seed;
      cm.total = candidates.size();
      for (size_t i = 0; i < candidates.size(); ++i) {
        cm.selected.push_back(i);
        ++cm.counts[candidates[i].source];
      }
    }

    fs::create_directories(args.out / "images");
    std::string out;
    for (size_t idx : cm.selected) {
      const VerifiedSample& s = samples[idx];
      TrainingSequence seq = convert_coordinates(consolidate(s), settings.convention);
      validate(seq);
      std::vector<std::string> paths;
      for (const auto& img : seq.images) {
        const std::string name = digest_hex(img->bytes_ref) + ".png";
        const fs::path src = in_images / name;
        if (!fs::exists(src)) {
          throw Error(ErrorCode::SchemaError, "sample " + s.sample_id + " references missing image " + name);
        }
        fs::copy_file(src, args.out / "images" / name, fs::copy_options::overwrite_existing);
        paths.push_back("images/" + name);
      }
      json rec = training_record(seq, paths);
      validate_training_record(rec);
      out += rec.dump() + "\n";
    }
    size_t passthrough = 0;
    for (const auto& p : settings.passthrough) {
      for (const auto& [n, line] : read_lines(p)) {
        const json j = parse_line(p, n, line);
        try {
          validate_training_record(j);
        } catch (const Error& e) {
          throw Error(ErrorCode::SchemaError, p.filename().string() + ":" + std::to_string(n) + ": " + e.what());
        }
        out += j.dump() + "\n";
        ++passthrough;
      }
    }
    write_file(args.out / "train.jsonl", out);
    write_file(args.out / "curation.json", manifest_to_json(cm, candidates).dump(2) + "\n");

    m.inputs = {{"samples", fs::absolute(records).string()}};
    if (settings.quotas) m.inputs["quotas"] = fs::absolute(*settings.quotas).string();
    m.outputs = {{"training", "train.jsonl"}, {"curation", "curation.json"}, {"images", "images"}};
    m.counters = {{"exported", cm.selected.size()},
                  {"not_selected", samples.size() - cm.selected.size()},
                  {"passthrough", passthrough}};
    m.config["effective"] = {{"convention", to_string(settings.convention)}};
    m.finished = utc_now();
    write_file(args.out / "run_manifest.json", m.to_json().dump(2) + "\n");
    log << "export: " << cm.selected.size() << " of " << samples.size() << " samples ("
        << to_string(settings.convention) << ")\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// infer / bench-resolution
// ---------------------------------------------------------------------------

namespace {

struct InferSummary {
  size_t n = 0;
  double accuracy = 0.0;
  double mean_rounds = 0.0;
  double mean_visual_area = 0.0;
  int exit_code = kOk;
};

json summary_json(const InferSummary& s) {
  return {{"n", s.n}, {"accuracy", s.accuracy}, {"mean_rounds", s.mean_rounds}, {"mean_visual_area", s.mean_visual_area}};
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

InferSummary run_infer(const AppConfig& cfg, DriverConfig dc, const std::vector<EvalItem>& items, int workers,
                       const fs::path& out, RunManifest& m, std::ostream& log) {
  auto gateway = std::make_shared<Gateway>(make_backend(dc.backend), workers);
  const InferenceDriver driver(dc, gateway);
  std::vector<std::optional<FinalResponse>> responses(items.size());
  {
    InterruptScope scope;
    parallel_for(items.size(), workers, &interrupt_flag(),
                 [&](size_t i) { responses[i] = driver.run(items[i].question, items[i].image); });
    m.interrupted = interrupt_flag().load();
  }

  fs::create_directories(out / "traces");
  const ImageStore store(out / "images");
  std::vector<FinalResponse> done;
  std::vector<std::string> refs;
  size_t answered = 0, limit = 0, failed = 0, backend_failed = 0;
  long rounds = 0;
  double area = 0.0;
  for (size_t i = 0; i < items.size(); ++i) {
    if (!responses[i]) continue;
    const FinalResponse& r = *responses[i];
    store.put_chain(r.chain);
    json tj = response_to_json(r);
    tj["format"] = "visforge-trace/1";
    tj["id"] = items[i].id;
    tj["reference"] = items[i].reference;
    tj["correct"] = r.status == ResponseStatus::Answered && r.chain.answer &&
                    answer_matches(*r.chain.answer, items[i].reference, cfg.matcher);
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << "-" << safe_name(items[i].id) << ".json";
    write_file(out / "traces" / name.str(), tj.dump(2) + "\n");
    switch (r.status) {
      case ResponseStatus::Answered: ++answered; break;
      case ResponseStatus::RoundLimit: ++limit; break;
      case ResponseStatus::Failed:
        ++failed;
        if (r.failure_code && exit_code_for(*r.failure_code) == kBackendFailure) ++backend_failed;
        break;
    }
    rounds += r.rounds_used;
    area += static_cast<double>(r.visual_area);
    done.push_back(r);
    refs.push_back(items[i].reference);
  }

  InferSummary s;
  s.n = done.size();
  s.accuracy = score_eval(done, refs, cfg.matcher);
  s.mean_rounds = s.n ? static_cast<double>(rounds) / static_cast<double>(s.n) : 0.0;
  s.mean_visual_area = s.n ? area / static_cast<double>(s.n) : 0.0;
  json sj = summary_json(s);
  sj["format"] = "visforge-summary/1";
  sj["answered"] = answered;
  sj["round_limit"] = limit;
  sj["failed"] = failed;
  sj["budget"] = budget_to_json(dc.budget);
  sj["max_rounds"] = dc.max_rounds;
  write_file(out / "summary.json", sj.dump(2) + "\n");

  m.input_records = items.size();
  m.counters = {{"answered", answered}, {"round_limit", limit}, {"failed", failed}};
  m.outputs = {{"traces", "traces"}, {"summary", "summary.json"}, {"images", "images"}};
  m.finished = utc_now();
  write_file(out / "run_manifest.json", m.to_json().dump(2) + "\n");
  log << "infer: n=" << s.n << " accuracy=" << s.accuracy << " answered=" << answered << " round_limit=" << limit
      << " failed=" << failed << (m.interrupted ? " (interrupted)" : "") << "\n";
  s.exit_code = m.interrupted ? kInterrupted : (backend_failed > 0 ? kBackendFailure : kOk);
  return s;
}

}  // namespace

int cmd_infer(const InferArgs& args, std::ostream& log) {
  return guarded(log, [&]() -> int {
    RunManifest m;
    m.command = "infer";
    m.started = utc_now();
    const AppConfig cfg = load_config(args.config);
    if (!cfg.inference) throw Error(ErrorCode::ConfigError, "config has no inference section");
    DriverConfig dc = *cfg.inference;
    if (args.budget) dc.budget = parse_budget(*args.budget);
    const int workers = args.workers.value_or(cfg.workers);
    if (workers < 1) throw Error(ErrorCode::ConfigError, "--workers must be >= 1");
    m.seed = args.seed.value_or(cfg.seed);
    m.config = cfg.snapshot;
    m.config["effective"] = {{"budget", budget_to_json(dc.budget)}, {"workers", workers}};
    m.inputs = {{"eval", fs::absolute(args.eval).string()}, {"config", fs::absolute(args.config).string()}};
    const auto items = load_eval(args.eval);
    return run_infer(cfg, dc, items, workers, args.out, m, log).exit_code;
  });
}

int cmd_bench_resolution(const BenchArgs& args, std::ostream& log) {
  return guarded(log, [&]() -> int {
    const AppConfig cfg = load_config(args.config);
    if (!cfg.inference) throw Error(ErrorCode::ConfigError, "config has no inference section");
    if (args.presets.empty()) throw Error(ErrorCode::ConfigError, "no presets given");
    std::vector<PixelBudget> budgets;
    for (const auto& p : args.presets) budgets.push_back(parse_budget(p));
    const int workers = args.workers.value_or(cfg.workers);
    const auto items = load_eval(args.eval);

    json rows = json::array();
    std::ostringstream table;
    table << "| preset | max_pixels | accuracy | mean_rounds | mean_visual_area |\n|---|---|---|---|---|\n";
    int code = kOk;
    for (size_t k = 0; k < args.presets.size(); ++k) {
      RunManifest m;
      m.command = "bench-resolution";
      m.started = utc_now();
      m.seed = cfg.seed;
      m.config = cfg.snapshot;
      m.inputs = {{"eval", fs::absolute(args.eval).string()}, {"preset", args.presets[k]}};
      DriverConfig dc = *cfg.inference;
      dc.budget = budgets[k];
      const InferSummary s = run_infer(cfg, dc, items, workers, args.out / safe_name(args.presets[k]), m, log);
      code = std::max(code, s.exit_code);
      json row = summary_json(s);
      row["preset"] = args.presets[k];
      row["max_pixels"] = budgets[k].max_pixels;
      rows.push_back(row);
      table << "| " << args.presets[k] << " | " << budgets[k].max_pixels << " | " << std::fixed << std::setprecision(4)
            << s.accuracy << " | " << s.mean_rounds << " | " << std::setprecision(1) << s.mean_visual_area << " |\n";
      if (code == kInterrupted) break;
    }
    write_file(args.out / "bench.json", json{{"format", "visforge-bench/1"}, {"rows", rows}}.dump(2) + "\n");
    write_file(args.out / "bench.md", table.str());
    std::cout << table.str();
    return code;
  });
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int cmd_verify(const VerifyArgs& args, std::ostream& log) {
  return guarded(log, [&]() -> int {
    ToolboxOptions opts;
    if (args.config) {
      const AppConfig cfg = load_config(*args.config);
      if (cfg.generation) opts = cfg.generation->toolbox;
    }
    const fs::path file = fs::is_directory(args.input) ? args.input / "accepted.jsonl" : args.input;
    const fs::path base = fs::absolute(file).parent_path();
    const ImageStore store(args.images.value_or(base / "images"));
    size_t checked = 0;
    for (const auto& [n, line] : read_lines(file)) {
      const std::string where = file.filename().string() + ":" + std::to_string(n);
      const json j = parse_line(file, n, line);
      try {
        const std::string format = j.value("format", std::string());
        if (format == "visforge-train/1") {
          validate_training_record(j);
          for (const auto& p : j.at("images")) {
            if (!fs::exists(base / p.get<std::string>())) {
              throw Error(ErrorCode::MissingImage, "image " + p.get<std::string>() + " not found");
            }
          }
        } else {
          const VerifiedSample s = sample_from_json(j);
          const ReasoningChain chain = attach_pixels(s.chain, store);
          for (size_t k = 0; k < chain.steps.size(); ++k) {
            const auto& step = chain.steps[k];
            if (!step.command) continue;
            const ImagePtr again = apply_tool(chain.root_image, *step.command, ToolMode::Train, s.budget, opts);
            if (again->bytes_ref != step.observation->bytes_ref) {
              throw Error(ErrorCode::InvalidChain, "step " + std::to_string(k) + " observation does not replay");
            }
          }
        }
      } catch (const Error& e) {
        log << "verify: " << where << ": " << e.what() << "\n";
        return kSchemaViolation;
      } catch (const nlohmann::json::exception& e) {
        log << "verify: " << where << ": " << e.what() << "\n";
        return kSchemaViolation;
      }
      ++checked;
    }
    log << "verify: " << checked << " records ok\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string img_tag(const ImageStore& store, const ImageState& img) {
  const auto raster = store.get(img.bytes_ref);
  const auto png = encode_png(*raster);
  std::ostringstream o;
  o << "<figure><img src=\"data:image/png;base64," << base64_encode(png) << "\" width=\"" << std::min(img.width, 512)
    << "\"><figcaption>" << html_escape(img.id) << " " << img.width << "x" << img.height;
  if (!img.is_original()) o << " via " << html_escape(img.provenance.tool);
  o << "</figcaption></figure>\n";
  return o.str();
}

}  // namespace

int cmd_report(const ReportArgs& args, std::ostream& log) {
  return guarded(log, [&]() -> int {
    std::ifstream in(args.trace);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + args.trace.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // A trace file holds one document; a sample file holds one record per line.
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
      const auto nl = text.find('\n');
      doc = json::parse(text.substr(0, nl), nullptr, false);
    }
    if (doc.is_discarded() || !doc.contains("chain")) {
      throw Error(ErrorCode::SchemaError, args.trace.string() + " holds no chain");
    }
    const fs::path dir = fs::absolute(args.trace).parent_path();
    fs::path images = args.images.value_or(dir / "images");
    if (!args.images && !fs::exists(images)) images = dir.parent_path() / "images";
    const ImageStore store(images);
    const ReasoningChain chain = attach_pixels(chain_from_json(doc.at("chain")), store);

    std::ostringstream h;
    h << "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>visforge trace</title><style>"
         "body{font-family:sans-serif;max-width:60em;margin:auto}figure{display:inline-block;margin:.5em}"
         "pre{background:#f4f4f4;padding:.5em;white-space:pre-wrap}.step{border-left:3px solid #888;padding-left:1em}"
         "</style></head><body>\n";
    h << "<h1>" << html_escape(chain.question) << "</h1>\n";
    if (doc.contains("status")) h << "<p>status: <b>" << html_escape(doc["status"].get<std::string>()) << "</b></p>\n";
    h << img_tag(store, *chain.root_image);
    for (size_t k = 0; k < chain.steps.size(); ++k) {
      const auto& s = chain.steps[k];
      h << "<div class=\"step\"><h2>Step " << k + 1 << "</h2>\n<pre>" << html_escape(s.content.atomic_step) << "</pre>\n";
      if (!s.content.visual_plan.empty()) h << "<p><i>" << html_escape(s.content.visual_plan) << "</i></p>\n";
      if (s.command) h << "<pre>" << html_escape(render_command(*s.command)) << "</pre>\n";
      if (s.observation) h << img_tag(store, *s.observation);
      h << "</div>\n";
    }
    if (!chain.final_reasoning.empty()) h << "<h2>Final reasoning</h2><pre>" << html_escape(chain.final_reasoning) << "</pre>\n";
    if (chain.answer) h << "<h2>Answer</h2><p>" << html_escape(*chain.answer) << "</p>\n";
    if (doc.contains("reference")) h << "<p>reference: " << html_escape(doc["reference"].get<std::string>()) << "</p>\n";
    h << "</body></html>\n";
    write_file(args.out, h.str());
    log << "report: wrote " << args.out.string() << "\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// tool
// ---------------------------------------------------------------------------

int cmd_tool(const ToolArgs& args, std::ostream& log) {
  return guarded(log, [&]() -> int {
    ToolMode mode;
    if (args.mode == "train") {
      mode = ToolMode::Train;
    } else if (args.mode == "infer") {
      mode = ToolMode::Infer;
    } else {
      throw Error(ErrorCode::ConfigError, "--mode must be train or infer");
    }
    const PixelBudget budget = parse_budget(args.budget);
    const ImagePtr root = make_original(load_image(args.image));
    const ImagePtr out = apply_tool(root, extract_tool_command(args.command), mode, budget);
    save_png(*out->pixels, args.out);
    std::cout << image_to_json(*out).dump() << "\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// argv
// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"visforge: tool-augmented visual reasoning traces"};
  app.require_subcommand(1);
  int code = kOk;

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "synthesize verified reasoning chains from seed triplets");
  g->add_option("seeds", gen.seeds, "seed manifest (.jsonl)")->required();
  g->add_option("--config", gen.config, "config file")->required();
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--seed", gen.seed);
  g->add_option("--workers", gen.workers);
  g->add_option("--budget", gen.budget, "low|med|high|train|custom:N");
  g->callback([&] { code = cmd_generate(gen, std::cerr); });

  ExportArgs ex;
  auto* e = app.add_subcommand("export", "consolidate accepted samples into a training file");
  e->add_option("samples", ex.samples, "generate output directory or accepted.jsonl")->required();
  e->add_option("--out", ex.out, "output directory")->required();
  e->add_option("--config", ex.config);
  e->add_option("--coordinates", ex.convention, "normalized|absolute");
  e->add_option("--quotas", ex.quotas, "quota file (.json)");
  e->add_option("--total", ex.total);
  e->add_option("--seed", ex.seed);
  e->callback([&] { code = cmd_export(ex, std::cerr); });

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "run the multi-turn inference loop over an eval manifest");
  i->add_option("eval", inf.eval, "eval manifest (.jsonl)")->required();
  i->add_option("--config", inf.config)->required();
  i->add_option("--out", inf.out)->required();
  i->add_option("--workers", inf.workers);
  i->add_option("--budget", inf.budget, "low|med|high|train|custom:N");
  i->add_option("--seed", inf.seed);
  i->callback([&] { code = cmd_infer(inf, std::cerr); });

  BenchArgs bench;
  auto* b = app.add_subcommand("bench-resolution", "repeat inference per pixel budget");
  b->add_option("eval", bench.eval)->required();
  b->add_option("--config", bench.config)->required();
  b->add_option("--out", bench.out)->required();
  b->add_option("--budget", bench.presets, "budgets to sweep")->delimiter(',');
  b->add_option("--workers", bench.workers);
  b->callback([&] { code = cmd_bench_resolution(bench, std::cerr); });

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "check sample or training records and their images");
  v->add_option("input", ver.input)->required();
  v->add_option("--images", ver.images);
  v->add_option("--config", ver.config);
  v->callback([&] { code = cmd_verify(ver, std::cerr); });

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "render a trace to a static HTML page");
  r->add_option("trace", rep.trace)->required();
  r->add_option("--out", rep.out)->required();
  r->add_option("--images", rep.images);
  r->callback([&] { code = cmd_report(rep, std::cerr); });

  ToolArgs tool;
  auto* t = app.add_subcommand("tool", "apply one tool command to an image");
  t->add_option("image", tool.image)->required();
  t->add_option("--command", tool.command, "function body JSON")->required();
  t->add_option("--mode", tool.mode, "train|infer");
  t->add_option("--budget", tool.budget);
  t->add_option("--out", tool.out)->required();
  t->callback([&] { code = cmd_tool(tool, std::cerr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kConfigError;
  }
  return code;
}

}  // namespace visforge::cli
