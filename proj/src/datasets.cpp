#include "steered/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "steered/decoder.hpp"
#include "steered/error.hpp"

namespace steered {

namespace {

using json = nlohmann::ordered_json;

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string replace_once(std::string text, std::string_view needle, std::string_view value) {
  const auto pos = text.find(needle);
  text.replace(pos, needle.size(), value);
  return text;
}

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

/// Calls `fn(record, line_number)` for each non-blank JSON line.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::data, location(path, line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!record.is_object()) fail(ErrorKind::data, location(path, line_no) + ": expected an object");
    fn(record, line_no);
  }
}

std::string required_string(const json& record, const char* key, const std::filesystem::path& path,
                            std::size_t line_no) {
  if (!record.contains(key) || !record[key].is_string()) {
    fail(ErrorKind::data, location(path, line_no) + ": missing string field '" + key + "'");
  }
  return record[key].get<std::string>();
}

std::string optional_string(const json& record, const char* key, const std::filesystem::path& path,
                            std::size_t line_no) {
  if (!record.contains(key) || record[key].is_null()) return {};
  if (!record[key].is_string()) {
    fail(ErrorKind::data, location(path, line_no) + ": field '" + key + "' must be a string");
  }
  return record[key].get<std::string>();
}

std::vector<std::string> parse_csv_line(const std::string& line, const std::filesystem::path& path,
                                        std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back().push_back(c);
    }
  }
  if (quoted) fail(ErrorKind::data, location(path, line_no) + ": unterminated quote");
  return fields;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::string common_direction(const std::vector<std::string>& directions) {
  std::set<std::string> distinct(directions.begin(), directions.end());
  if (distinct.size() == 1) return *distinct.begin();
  return "full";
}

}  // namespace

std::string_view to_string(StereoLabel label) noexcept {
  return label == StereoLabel::stereotype ? "stereotype" : "anti_stereotype";
}

std::optional<StereoLabel> parse_stereo_label(std::string_view text) {
  if (text == "stereotype") return StereoLabel::stereotype;
  if (text == "anti_stereotype") return StereoLabel::anti_stereotype;
  return std::nullopt;
}

std::pair<LabeledCorpus, LabeledCorpus> expand_pairs(const std::vector<BiasPair>& pairs,
                                                     const std::vector<std::string>& templates) {
  if (pairs.empty()) fail(ErrorKind::data, "expand_pairs needs at least one bias pair");
  if (templates.empty()) fail(ErrorKind::usage, "expand_pairs needs at least one template");
  for (const auto& t : templates) {
    if (count_occurrences(t, "{T}") != 1 || count_occurrences(t, "{A}") != 1) {
      fail(ErrorKind::usage, "template '" + t + "' must contain {T} and {A} exactly once each");
    }
  }
  LabeledCorpus stereo{{}, StereoLabel::stereotype, {}};
  LabeledCorpus anti{{}, StereoLabel::anti_stereotype, {}};
  std::vector<std::string> directions;
  auto fill = [](const std::string& t, const std::string& target, const std::string& attribute) {
    return replace_once(replace_once(t, "{T}", target), "{A}", attribute);
  };
  for (const auto& p : pairs) {
    if (p.t1.empty() || p.t2.empty() || p.a1.empty() || p.a2.empty()) {
      fail(ErrorKind::data, "bias pair has an empty term");
    }
    directions.push_back(p.direction);
    for (const auto& t : templates) {
      stereo.sentences.push_back(fill(t, p.t1, p.a1));
      stereo.sentences.push_back(fill(t, p.t2, p.a2));
      anti.sentences.push_back(fill(t, p.t1, p.a2));
      anti.sentences.push_back(fill(t, p.t2, p.a1));
    }
  }
  stereo.direction = anti.direction = common_direction(directions);
  return {std::move(stereo), std::move(anti)};
}

std::pair<LabeledCorpus, LabeledCorpus> expand_pairs(const std::vector<BiasPair>& pairs,
                                                     std::string_view templ) {
  return expand_pairs(pairs, std::vector<std::string>{std::string(templ)});
}

void validate(const StereoTriple& triple) {
  if (count_occurrences(triple.context, kBlank) != 1) {
    fail(ErrorKind::data, "context must contain exactly one BLANK: '" + triple.context + "'");
  }
  if (triple.stereo.empty() || triple.anti.empty() || triple.unrelated.empty()) {
    fail(ErrorKind::data, "empty option in triple '" + triple.context + "'");
  }
  if (triple.stereo == triple.anti || triple.stereo == triple.unrelated ||
      triple.anti == triple.unrelated) {
    fail(ErrorKind::data, "options must be distinct in triple '" + triple.context + "'");
  }
}

std::string complete_stereoset(const StereoTriple& triple, OptionKind which) {
  validate(triple);
  switch (which) {
    case OptionKind::stereo: return replace_once(triple.context, kBlank, triple.stereo);
    case OptionKind::anti: return replace_once(triple.context, kBlank, triple.anti);
    case OptionKind::unrelated: break;
  }
  fail(ErrorKind::usage, "only the stereotype or anti-stereotype option can complete a triple");
}

std::pair<LabeledCorpus, LabeledCorpus> complete_all(const std::vector<StereoTriple>& triples) {
  if (triples.empty()) fail(ErrorKind::data, "no triples to complete");
  LabeledCorpus stereo{{}, StereoLabel::stereotype, {}};
  LabeledCorpus anti{{}, StereoLabel::anti_stereotype, {}};
  std::vector<std::string> directions;
  for (const auto& t : triples) {
    stereo.sentences.push_back(complete_stereoset(t, OptionKind::stereo));
    anti.sentences.push_back(complete_stereoset(t, OptionKind::anti));
    directions.push_back(t.direction);
  }
  stereo.direction = anti.direction = common_direction(directions);
  return {std::move(stereo), std::move(anti)};
}

std::vector<LabeledRecord> load_labeled_records(const std::filesystem::path& path) {
  std::vector<LabeledRecord> records;
  for_each_json_line(path, [&](const json& r, std::size_t line_no) {
    LabeledRecord rec;
    rec.text = required_string(r, "text", path, line_no);
    const auto label = required_string(r, "label", path, line_no);
    auto parsed = parse_stereo_label(label);
    if (!parsed) {
      fail(ErrorKind::data, location(path, line_no) + ": unknown label '" + label +
                                "' (expected stereotype or anti_stereotype)");
    }
    rec.label = *parsed;
    rec.direction = optional_string(r, "direction", path, line_no);
    records.push_back(std::move(rec));
  });
  if (records.empty()) fail(ErrorKind::data, path.string() + ": empty corpus file");
  return records;
}

LabeledCorpus load_labeled_corpus(const std::filesystem::path& path,
                                  std::optional<StereoLabel> label,
                                  std::optional<std::string> direction, LoadStats* stats) {
  const auto records = load_labeled_records(path);
  std::set<StereoLabel> labels;
  for (const auto& r : records) {
    if (!direction || r.direction == *direction) labels.insert(r.label);
  }
  if (!label) {
    if (labels.size() > 1) {
      fail(ErrorKind::data, path.string() + ": file mixes stereotype and anti_stereotype "
                                            "records; select one label");
    }
    if (!labels.empty()) label = *labels.begin();
  }
  LoadStats local;
  LoadStats& s = stats ? *stats : local;
  LabeledCorpus corpus;
  corpus.label = label.value_or(StereoLabel::stereotype);
  std::set<std::string> seen;
  std::vector<std::string> directions;
  for (const auto& r : records) {
    if (r.label != corpus.label || (direction && r.direction != *direction)) continue;
    ++s.records;
    if (!seen.insert(r.text).second) {
      ++s.duplicates;
      s.warnings.push_back(path.string() + ": duplicate sentence dropped: '" + r.text + "'");
      continue;
    }
    corpus.sentences.push_back(r.text);
    directions.push_back(r.direction);
  }
  if (corpus.sentences.empty()) {
    fail(ErrorKind::data, path.string() + ": no " + std::string(to_string(corpus.label)) +
                              " sentences" + (direction ? " for direction " + *direction : ""));
  }
  corpus.direction = common_direction(directions);
  return corpus;
}

std::vector<BiasPair> load_bias_pairs(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<BiasPair> pairs;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = parse_csv_line(line, path, line_no);
    if (header) {
      if (fields != std::vector<std::string>{"t1", "t2", "a1", "a2", "direction"}) {
        fail(ErrorKind::data, location(path, line_no) + ": expected header t1,t2,a1,a2,direction");
      }
      header = false;
      continue;
    }
    if (fields.size() != 5) {
      fail(ErrorKind::data, location(path, line_no) + ": expected 5 fields, found " +
                                std::to_string(fields.size()));
    }
    BiasPair p{fields[0], fields[1], fields[2], fields[3], fields[4]};
    if (p.t1.empty() || p.t2.empty() || p.a1.empty() || p.a2.empty()) {
      fail(ErrorKind::data, location(path, line_no) + ": empty term");
    }
    pairs.push_back(std::move(p));
  }
  if (header) fail(ErrorKind::data, path.string() + ": empty bias pair file");
  return pairs;
}

std::vector<StereoTriple> load_stereoset(const std::filesystem::path& path) {
  std::vector<StereoTriple> triples;
  for_each_json_line(path, [&](const json& r, std::size_t line_no) {
    StereoTriple t{required_string(r, "context", path, line_no),
                   required_string(r, "stereo", path, line_no),
                   required_string(r, "anti", path, line_no),
                   required_string(r, "unrelated", path, line_no),
                   optional_string(r, "direction", path, line_no)};
    try {
      validate(t);
    } catch (const Error& e) {
      fail(ErrorKind::data, location(path, line_no) + ": " + e.what());
    }
    triples.push_back(std::move(t));
  });
  if (triples.empty()) fail(ErrorKind::data, path.string() + ": no triples");
  return triples;
}

PromptSet load_prompts(const std::filesystem::path& path) {
  PromptSet set;
  std::set<std::string> directions;
  for_each_json_line(path, [&](const json& r, std::size_t line_no) {
    auto group = required_string(r, "group", path, line_no);
    auto prompt = required_string(r, "prompt", path, line_no);
    directions.insert(optional_string(r, "direction", path, line_no));
    set.groups[std::move(group)].push_back(std::move(prompt));
  });
  if (set.groups.size() < 2) {
    fail(ErrorKind::data, path.string() + ": prompt sets need at least two groups, found " +
                              std::to_string(set.groups.size()));
  }
  if (directions.size() > 1) {
    fail(ErrorKind::data, path.string() + ": prompts span several directions; split the file");
  }
  set.direction = *directions.begin();
  return set;
}

std::vector<ContextPair> load_context_pairs(const std::filesystem::path& path) {
  std::vector<ContextPair> pairs;
  for_each_json_line(path, [&](const json& r, std::size_t line_no) {
    pairs.push_back({required_string(r, "context_a", path, line_no),
                     required_string(r, "context_b", path, line_no),
                     optional_string(r, "direction", path, line_no)});
  });
  if (pairs.empty()) fail(ErrorKind::data, path.string() + ": no context pairs");
  return pairs;
}

std::string format_labeled_corpus(const LabeledCorpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    json j;
    j["text"] = s;
    j["label"] = std::string(to_string(corpus.label));
    j["direction"] = corpus.direction;
    out += j.dump() + "\n";
  }
  return out;
}

std::string format_labeled_records(const std::vector<LabeledRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["text"] = r.text;
    j["label"] = std::string(to_string(r.label));
    j["direction"] = r.direction;
    out += j.dump() + "\n";
  }
  return out;
}

std::string format_bias_pairs(const std::vector<BiasPair>& pairs) {
  std::string out = "t1,t2,a1,a2,direction\n";
  for (const auto& p : pairs) {
    out += csv_field(p.t1) + "," + csv_field(p.t2) + "," + csv_field(p.a1) + "," +
           csv_field(p.a2) + "," + csv_field(p.direction) + "\n";
  }
  return out;
}

std::string format_stereoset(const std::vector<StereoTriple>& triples) {
  std::string out;
  for (const auto& t : triples) {
    json j;
    j["context"] = t.context;
    j["stereo"] = t.stereo;
    j["anti"] = t.anti;
    j["unrelated"] = t.unrelated;
    j["direction"] = t.direction;
    out += j.dump() + "\n";
  }
  return out;
}

std::string format_prompts(const PromptSet& prompts) {
  std::string out;
  for (const auto& [group, texts] : prompts.groups) {
    for (const auto& text : texts) {
      json j;
      j["group"] = group;
      j["prompt"] = text;
      j["direction"] = prompts.direction;
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::string format_context_pairs(const std::vector<ContextPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j;
    j["context_a"] = p.context_a;
    j["context_b"] = p.context_b;
    j["direction"] = p.direction;
    out += j.dump() + "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : read_text_file(path)) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

TrainValidationSplit train_validation_split(const std::vector<std::string>& sentences,
                                            std::uint64_t seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    fail(ErrorKind::usage, "train fraction must lie in (0, 1]");
  }
  std::vector<std::string> shuffled = sentences;
  SplitMix64 rng(seed);
  // Fisher-Yates over SplitMix64.
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % i);
    std::swap(shuffled[i - 1], shuffled[j]);
  }
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(shuffled.size())));
  TrainValidationSplit split;
  split.train.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
  split.manifest = {seed, train_fraction, split.train.size(), split.validation.size()};
  return split;
}

}  // namespace steered
