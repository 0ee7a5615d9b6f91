#include "isd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "isd/errors.hpp"

namespace isd {

bool RunConfig::operator==(const RunConfig& o) const {
  return train == o.train && data == o.data && probe.epochs == o.probe.epochs && probe.lr == o.probe.lr &&
         recall_ks == o.recall_ks && temperatures == o.temperatures && unbalanced == o.unbalanced;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not true or false");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& v, Parse parse) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse(trim(item)));
  return out;
}

template <typename T, typename Fmt>
std::string fmt_list(const std::vector<T>& values, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + fmt(values[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename T>
Field integer_field(std::string key, T& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](const std::string& v) { ref = parse_integer<T>(key, v); }};
}

Field double_field(std::string key, double& ref) {
  return {key, [&ref] { return fmt_double(ref); }, [&ref, key](const std::string& v) { ref = parse_double(key, v); }};
}

Field bool_field(std::string key, bool& ref) {
  return {key, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, key](const std::string& v) { ref = parse_bool(key, v); }};
}

Field string_field(std::string key, std::string& ref) {
  return {key, [&ref] { return ref; }, [&ref](const std::string& v) { ref = v; }};
}

Field size_list_field(std::string key, std::vector<std::size_t>& ref) {
  return {key, [&ref] { return fmt_list(ref, [](std::size_t x) { return std::to_string(x); }); },
          [&ref, key](const std::string& v) {
            ref = parse_list<std::size_t>(v, [&](const std::string& s) { return parse_integer<std::size_t>(key, s); });
          }};
}

void add_policy_fields(std::vector<Field>& fields, const std::string& prefix, AugmentPolicy& p) {
  fields.push_back({prefix, [&p] { return p.name; }, [&p](const std::string& v) { p = AugmentPolicy::preset(v); }});
  fields.push_back(double_field(prefix + ".noise_std", p.noise_std));
  fields.push_back(double_field(prefix + ".mask_prob", p.mask_prob));
  fields.push_back(double_field(prefix + ".scale_min", p.scale_min));
  fields.push_back(double_field(prefix + ".scale_max", p.scale_max));
  fields.push_back(double_field(prefix + ".rotation_max", p.rotation_max));
  fields.push_back(double_field(prefix + ".crop_min", p.crop_min));
  fields.push_back(double_field(prefix + ".crop_max", p.crop_max));
  fields.push_back(double_field(prefix + ".flip_prob", p.flip_prob));
}

std::vector<Field> train_fields(TrainConfig& c) {
  std::vector<Field> f;
  f.push_back({"objective", [&c] { return to_string(c.loss.objective); },
               [&c](const std::string& v) {
                 try {
                   c.loss.objective = parse_objective(v);
                 } catch (const ContractError& e) {
                   throw ConfigError(e.what());
                 }
               }});
  f.push_back(double_field("temperature", c.loss.temperature));
  f.push_back(double_field("momentum", c.momentum));
  f.push_back(integer_field("bank_capacity", c.bank_capacity));
  f.push_back(integer_field("batch_size", c.batch_size));
  f.push_back(integer_field("epochs", c.epochs));
  f.push_back(double_field("lr", c.lr));
  f.push_back({"lr_schedule", [&c] { return std::string(c.lr_schedule == LrSchedule::Kind::step ? "step" : "cosine"); },
               [&c](const std::string& v) {
                 if (v == "step") {
                   c.lr_schedule = LrSchedule::Kind::step;
                 } else if (v == "cosine") {
                   c.lr_schedule = LrSchedule::Kind::cosine;
                 } else {
                   throw ConfigError("lr_schedule: '" + v + "' is not step or cosine");
                 }
               }});
  f.push_back(double_field("lr_factor", c.lr_factor));
  f.push_back(size_list_field("lr_milestones", c.lr_milestones));
  f.push_back(double_field("sgd_momentum", c.sgd_momentum));
  f.push_back(double_field("weight_decay", c.weight_decay));
  f.push_back(size_list_field("encoder_hidden", c.encoder_hidden));
  f.push_back(integer_field("embedding_dim", c.embedding_dim));
  f.push_back(integer_field("predictor_hidden", c.predictor_hidden));
  add_policy_fields(f, "teacher_aug", c.teacher_aug);
  add_policy_fields(f, "student_aug", c.student_aug);
  f.push_back(integer_field("init_seed", c.init_seed));
  f.push_back(integer_field("order_seed", c.order_seed));
  f.push_back(integer_field("aug_seed", c.aug_seed));
  f.push_back(bool_field("distill_mode", c.distill_mode));
  f.push_back(integer_field("eval_every", c.eval_every));
  f.push_back(integer_field("knn_k", c.knn_k));
  return f;
}

std::vector<Field> run_fields(RunConfig& c) {
  auto f = train_fields(c.train);
  auto& d = c.data;
  f.push_back(string_field("data.source", d.source));
  f.push_back(integer_field("data.classes", d.mixture.classes));
  f.push_back(integer_field("data.per_class", d.mixture.per_class));
  f.push_back(integer_field("data.eval_per_class", d.eval_per_class));
  f.push_back(integer_field("data.dim", d.mixture.dim));
  f.push_back(double_field("data.sep", d.mixture.sep));
  f.push_back(integer_field("data.seed", d.seed));
  f.push_back(string_field("data.train_path", d.train_path));
  f.push_back(string_field("data.eval_path", d.eval_path));
  f.push_back(string_field("data.train_images", d.train_images));
  f.push_back(string_field("data.train_labels", d.train_labels));
  f.push_back(string_field("data.eval_images", d.eval_images));
  f.push_back(string_field("data.eval_labels", d.eval_labels));
  f.push_back(integer_field("probe.epochs", c.probe.epochs));
  f.push_back(double_field("probe.lr", c.probe.lr));
  f.push_back(size_list_field("recall.ks", c.recall_ks));
  f.push_back({"ablation.temperatures", [&c] { return fmt_list(c.temperatures, fmt_double); },
               [&c](const std::string& v) {
                 c.temperatures =
                     parse_list<double>(v, [](const std::string& s) { return parse_double("ablation.temperatures", s); });
               }});
  auto& u = c.unbalanced;
  f.push_back(integer_field("unbalanced.classes", u.classes));
  f.push_back(integer_field("unbalanced.large", u.large));
  f.push_back(integer_field("unbalanced.large_count", u.large_count));
  f.push_back(integer_field("unbalanced.small_count", u.small_count));
  f.push_back(integer_field("unbalanced.eval_per_class", u.eval_per_class));
  f.push_back(integer_field("unbalanced.reps", u.reps));
  f.push_back(integer_field("unbalanced.dim", u.dim));
  f.push_back(double_field("unbalanced.sep", u.sep));
  f.push_back(integer_field("unbalanced.epochs", u.epochs));
  f.push_back(integer_field("unbalanced.bank_capacity", u.bank_capacity));
  f.push_back(double_field("unbalanced.moco_temperature", u.moco_temperature));
  return f;
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
  auto key = trim(std::string_view(line).substr(0, eq));
  if (key.empty()) throw ConfigError(where + ": empty key");
  return {key, trim(std::string_view(line).substr(eq + 1))};
}

void assign(std::vector<Field>& fields, const std::string& key, const std::string& value, const std::string& where) {
  for (auto& f : fields) {
    if (f.key == key) {
      f.set(value);
      return;
    }
  }
  throw ConfigError(where + ": unknown key '" + key + "'");
}

std::string serialize(std::vector<Field>& fields) {
  std::string out;
  for (auto& f : fields) out += f.key + " = " + f.get() + "\n";
  return out;
}

std::set<std::string> parse_into(std::vector<Field> fields, const std::string& text,
                                 const std::vector<std::string>& overrides) {
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const auto hash = raw.find('#');
    const auto line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(line_no);
    const auto [key, value] = split_assignment(line, where);
    assign(fields, key, value, where);
    seen.insert(key);
  }
  for (const auto& o : overrides) {
    const auto [key, value] = split_assignment(o, "override '" + o + "'");
    assign(fields, key, value, "override '" + o + "'");
    seen.insert(key);
  }
  return seen;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  RunConfig config;
  const auto seen = parse_into(run_fields(config), text, overrides);
  if (config.train.loss.objective == Objective::byol && !seen.contains("momentum")) config.train.momentum = 0.99;
  return config;
}

std::string serialize_run_config(const RunConfig& config) {
  auto copy = config;
  auto fields = run_fields(copy);
  return serialize(fields);
}

std::string serialize_train_config(const TrainConfig& config) {
  auto copy = config;
  auto fields = train_fields(copy);
  return serialize(fields);
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig config;
  parse_into(train_fields(config), text, {});
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), overrides);
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.train.init_seed = seed;
  config.train.order_seed = seed + 1;
  config.train.aug_seed = seed + 2;
  config.data.seed = seed;
}

}  // namespace isd
