#include "lightllm/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace lightllm {

namespace embedded {
extern const std::string_view kForecastingTemplate;
extern const std::string_view kLocalizationTemplate;
extern const std::string_view kEstimationTemplate;
}  // namespace embedded

namespace {

bool slot_char(char c, bool first) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalpha(u) || c == '_' || (!first && std::isdigit(u));
}

// Length of the slot name starting at text[pos] (just after '{') if it is
// followed by '}', else 0.
std::size_t slot_length(std::string_view text, std::size_t pos) {
  std::size_t n = 0;
  while (pos + n < text.size() && slot_char(text[pos + n], n == 0)) ++n;
  return (n > 0 && pos + n < text.size() && text[pos + n] == '}') ? n : 0;
}

}  // namespace

std::vector<std::string> PromptTemplate::slots() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    const std::size_t n = slot_length(text, i + 1);
    if (n == 0) continue;
    std::string name = text.substr(i + 1, n);
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
    i += n + 1;
  }
  return out;
}

std::string render_prompt(const PromptTemplate& tpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tpl.text.size());
  const std::string_view text = tpl.text;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const std::size_t n = text[i] == '{' ? slot_length(text, i + 1) : 0;
    if (n == 0) {
      out.push_back(text[i]);
      continue;
    }
    const std::string name(text.substr(i + 1, n));
    const auto it = bindings.find(name);
    if (it == bindings.end()) throw RenderError(name);
    out += it->second;
    i += n + 1;
  }
  return out;
}

void check_sections(std::string_view rendered) {
  std::size_t prev = std::string_view::npos;
  std::size_t prev_end = 0;
  for (std::string_view header : kPromptSections) {
    const std::size_t at = rendered.find(header, prev_end);
    if (at == std::string_view::npos)
      throw std::invalid_argument("prompt: missing section " + std::string(header));
    if (prev != std::string_view::npos) {
      const std::string_view body = rendered.substr(prev_end, at - prev_end);
      if (body.find_first_not_of(" \t\r\n-") == std::string_view::npos)
        throw std::invalid_argument("prompt: empty section before " + std::string(header));
    }
    prev = at;
    prev_end = at + header.size();
  }
  if (rendered.substr(prev_end).find_first_not_of(" \t\r\n-") == std::string_view::npos)
    throw std::invalid_argument("prompt: empty final section");
}

PromptTemplate builtin_template(std::string_view task) {
  if (task == "forecasting") return {"forecasting", std::string(embedded::kForecastingTemplate)};
  if (task == "localization") return {"localization", std::string(embedded::kLocalizationTemplate)};
  if (task == "estimation") return {"estimation", std::string(embedded::kEstimationTemplate)};
  throw std::invalid_argument("no built-in template for task '" + std::string(task) + "'");
}

PromptTemplate load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open template '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return {path, ss.str()};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_') {
      word.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
      if (!std::isspace(u)) tokens.emplace_back(1, c);
    }
  }
  flush();
  return tokens;
}

std::vector<std::int64_t> prompt_token_ids(std::string_view text, std::size_t vocab,
                                           std::size_t length) {
  if (vocab == 0) throw std::invalid_argument("prompt: vocabulary size must be positive");
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw std::invalid_argument("embed_prompt: empty text");
  std::vector<std::int64_t> ids(length, -1);
  for (std::size_t i = 0; i < std::min(length, tokens.size()); ++i)
    ids[i] = static_cast<std::int64_t>(fnv1a(tokens[i]) % vocab);
  return ids;
}

PromptTable::PromptTable(const PromptConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  if (cfg.vocab == 0 || cfg.length == 0 || cfg.d_model == 0)
    throw std::invalid_argument("prompt table: sizes must be positive");
  table = Tensor::randn({cfg.vocab, cfg.d_model}, rng,
                        1.0 / std::sqrt(static_cast<double>(cfg.d_model)), true);
}

Tensor PromptTable::embed(std::string_view text) const {
  return embed_ids(prompt_token_ids(text, cfg_.vocab, cfg_.length));
}

Tensor PromptTable::embed_ids(const std::vector<std::int64_t>& ids) const {
  const std::size_t d = cfg_.d_model;
  std::vector<std::int64_t> idx(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t j = 0; j < d; ++j)
      idx[t * d + j] = ids[t] < 0 ? -1 : ids[t] * static_cast<std::int64_t>(d) +
                                              static_cast<std::int64_t>(j);
  return gather(table, {ids.size(), d}, std::move(idx));
}

void PromptTable::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "table", table});
}

}  // namespace lightllm
