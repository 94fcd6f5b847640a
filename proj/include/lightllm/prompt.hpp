#pragma once

// Task knowledge prompts: structured templates with {slot} markers, rendered
// to text and embedded through a hashed-vocabulary table.

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lightllm/module.hpp"

namespace lightllm {

class RenderError : public std::invalid_argument {
 public:
  explicit RenderError(const std::string& slot)
      : std::invalid_argument("render_prompt: slot '" + slot + "' is not bound"), slot_(slot) {}
  const std::string& slot() const { return slot_; }

 private:
  std::string slot_;
};

// Section headers, in their fixed order.
inline constexpr std::string_view kPromptSections[] = {
    "<Dataset Description>:", "<Task Description>:", "<Data Organization>:",
    "<Key Input Characteristics>:"};

struct PromptTemplate {
  std::string name;
  std::string text;

  // Distinct slot names in order of first appearance.
  std::vector<std::string> slots() const;
};

using Bindings = std::map<std::string, std::string>;

// Replaces every {slot}; throws RenderError for the first unbound one.
std::string render_prompt(const PromptTemplate& tpl, const Bindings& bindings);

// Throws std::invalid_argument unless all four sections appear, in order,
// each followed by non-empty content.
void check_sections(std::string_view rendered);

PromptTemplate builtin_template(std::string_view task);
PromptTemplate load_template(const std::string& path);

// Lower-cased words (letters, digits, '_') and single punctuation marks.
std::vector<std::string> tokenize(std::string_view text);

// Vocabulary ids (fnv1a % vocab) truncated or padded with -1 to `length`.
std::vector<std::int64_t> prompt_token_ids(std::string_view text, std::size_t vocab,
                                           std::size_t length);

struct PromptConfig {
  std::size_t vocab = 4096;
  std::size_t length = 32;
  std::size_t d_model = 64;
};

class PromptTable {
 public:
  PromptTable(const PromptConfig& cfg, SeededRng& rng);

  // (length, d_model); padded positions are zero rows.
  Tensor embed(std::string_view text) const;
  Tensor embed_ids(const std::vector<std::int64_t>& ids) const;
  void collect(ParamList& out, const std::string& prefix) const;
  const PromptConfig& config() const { return cfg_; }

  Tensor table;

 private:
  PromptConfig cfg_;
};

}  // namespace lightllm
