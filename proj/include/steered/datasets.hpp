#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace steered {

enum class StereoLabel { stereotype, anti_stereotype };

std::string_view to_string(StereoLabel label) noexcept;
std::optional<StereoLabel> parse_stereo_label(std::string_view text);

/// (T1, T2, A1, A2): T1 a minority group, T2 a dominant group, A1/A2 the
/// attributes stereotypically attached to each.
struct BiasPair {
  std::string t1;
  std::string t2;
  std::string a1;
  std::string a2;
  std::string direction;  // gender, race, religion or any other tag
};

struct LabeledCorpus {
  std::vector<std::string> sentences;
  StereoLabel label = StereoLabel::stereotype;
  std::string direction;
};

inline constexpr std::string_view kBlank = "BLANK";

/// Fill-in-the-blank sentence with exactly one BLANK marker.
struct StereoTriple {
  std::string context;
  std::string stereo;
  std::string anti;
  std::string unrelated;
  std::string direction;
};

enum class OptionKind { stereo, anti, unrelated };

struct PromptSet {
  std::map<std::string, std::vector<std::string>> groups;
  std::string direction;
};

/// Context pair differing only in demographic terms.
struct ContextPair {
  std::string context_a;
  std::string context_b;
  std::string direction;
};

/// Diagnostics from a loader: duplicate lines dropped, etc.
struct LoadStats {
  std::size_t records = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> warnings;
};

inline constexpr std::string_view kDefaultTemplate = "{T} are {A}";

/// Stereotype set {(t1,a1), (t2,a2)}, anti-stereotype set {(t1,a2), (t2,a1)},
/// one instantiation per template.
std::pair<LabeledCorpus, LabeledCorpus> expand_pairs(const std::vector<BiasPair>& pairs,
                                                     const std::vector<std::string>& templates);
std::pair<LabeledCorpus, LabeledCorpus> expand_pairs(const std::vector<BiasPair>& pairs,
                                                     std::string_view templ = kDefaultTemplate);

/// Replaces BLANK by the stereotype or anti-stereotype option. The unrelated
/// option is rejected.
std::string complete_stereoset(const StereoTriple& triple, OptionKind which);
/// Fine-tuning data from triples: (stereotype corpus, anti-stereotype corpus).
std::pair<LabeledCorpus, LabeledCorpus> complete_all(const std::vector<StereoTriple>& triples);

void validate(const StereoTriple& triple);

struct LabeledRecord {
  std::string text;
  StereoLabel label = StereoLabel::stereotype;
  std::string direction;
};

std::vector<LabeledRecord> load_labeled_records(const std::filesystem::path& path);

/// Loads one label's sentences, deduplicated in first-seen order. Without a
/// label filter the file must hold a single label. The corpus direction is
/// the common tag of the selected records, or "full" when they span several.
LabeledCorpus load_labeled_corpus(const std::filesystem::path& path,
                                  std::optional<StereoLabel> label = std::nullopt,
                                  std::optional<std::string> direction = std::nullopt,
                                  LoadStats* stats = nullptr);

std::vector<BiasPair> load_bias_pairs(const std::filesystem::path& path);
std::vector<StereoTriple> load_stereoset(const std::filesystem::path& path);
PromptSet load_prompts(const std::filesystem::path& path);
std::vector<ContextPair> load_context_pairs(const std::filesystem::path& path);

std::string format_labeled_corpus(const LabeledCorpus& corpus);
std::string format_labeled_records(const std::vector<LabeledRecord>& records);
std::string format_bias_pairs(const std::vector<BiasPair>& pairs);
std::string format_stereoset(const std::vector<StereoTriple>& triples);
std::string format_prompts(const PromptSet& prompts);
std::string format_context_pairs(const std::vector<ContextPair>& pairs);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

/// FNV-1a 64 over the file's bytes, for provenance echoes.
std::uint64_t file_fingerprint(const std::filesystem::path& path);

struct SplitManifest {
  std::uint64_t seed = 0;
  double train_fraction = 0.9;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
};

struct TrainValidationSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  SplitManifest manifest;
};

/// Seeded shuffle, then the first round(fraction * n) items go to train.
TrainValidationSplit train_validation_split(const std::vector<std::string>& sentences,
                                            std::uint64_t seed, double train_fraction = 0.9);

}  // namespace steered
