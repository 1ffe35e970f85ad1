#include "forge/scanner.hpp"

#include "forge/digest.hpp"
#include "forge/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;

std::string_view to_string(UnitKind kind) noexcept {
  switch (kind) {
    case UnitKind::fortran_module: return "fortran-module";
    case UnitKind::fortran_submodule: return "fortran-submodule";
    case UnitKind::fortran_program: return "fortran-program";
    case UnitKind::fortran_subprogram: return "fortran-subprogram";
    case UnitKind::c_source: return "c-source";
    case UnitKind::c_header: return "c-header";
  }
  return "unknown";
}

namespace {

bool is_blank(char c) { return c == ' ' || c == '\t'; }
bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool rest_is_blank_or_comment(std::string_view line, std::size_t from) {
  for (std::size_t i = from; i < line.size(); ++i) {
    if (line[i] == '!') return true;
    if (!is_blank(line[i])) return false;
  }
  return true;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_blank(s[b])) ++b;
  while (e > b && is_blank(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Statement-level cursor; keyword and name matching are case-insensitive.
class Cursor {
 public:
  explicit Cursor(std::string_view text) : s_(text) {}

  void skip_blanks() {
    while (i_ < s_.size() && is_blank(s_[i_])) ++i_;
  }

  bool at_end() {
    skip_blanks();
    return i_ == s_.size();
  }

  bool keyword(std::string_view kw) {
    skip_blanks();
    if (s_.size() - i_ < kw.size()) return false;
    for (std::size_t k = 0; k < kw.size(); ++k)
      if (std::tolower(static_cast<unsigned char>(s_[i_ + k])) != kw[k]) return false;
    if (i_ + kw.size() < s_.size() && is_name_char(s_[i_ + kw.size()])) return false;
    i_ += kw.size();
    return true;
  }

  bool eat(std::string_view token) {
    skip_blanks();
    if (s_.substr(i_, token.size()) != token) return false;
    i_ += token.size();
    return true;
  }

  std::optional<std::string> name() {
    skip_blanks();
    if (i_ >= s_.size() || !std::isalpha(static_cast<unsigned char>(s_[i_]))) return std::nullopt;
    const auto start = i_;
    while (i_ < s_.size() && is_name_char(s_[i_])) ++i_;
    return lower(s_.substr(start, i_ - start));
  }

  // A masked literal: quote, NULs, quote.
  bool literal() {
    skip_blanks();
    if (i_ >= s_.size() || (s_[i_] != '"' && s_[i_] != '\'')) return false;
    const char q = s_[i_];
    auto j = i_ + 1;
    while (j < s_.size() && s_[j] == '\0') ++j;
    if (j >= s_.size() || s_[j] != q) return false;
    i_ = j + 1;
    return true;
  }

 private:
  std::string_view s_;
  std::size_t i_ = 0;
};

struct Facts {
  bool has_module = false;
  bool has_submodule = false;
  int programs = 0;
};

std::string resolve_relative(std::string_view including_path, const std::string& target) {
  const fs::path t(target);
  if (t.is_absolute()) return t.lexically_normal().generic_string();
  return (fs::path(std::string(including_path)).parent_path() / t).lexically_normal().generic_string();
}

void apply_statement(const Statement& st, std::string_view path, SourceInfo& info, Facts& facts) {
  {
    Cursor c(st.text);
    if (c.keyword("module")) {
      auto name = c.name();
      if (name && c.at_end() && *name != "procedure" && *name != "function" && *name != "subroutine") {
        info.provides.insert(*name);
        facts.has_module = true;
      }
      return;
    }
  }
  {
    Cursor c(st.text);
    if (c.keyword("submodule")) {
      if (!c.eat("(")) return;
      std::vector<std::string> ancestors;
      do {
        auto n = c.name();
        if (!n) return;
        ancestors.push_back(std::move(*n));
      } while (c.eat(":"));
      if (!c.eat(")")) return;
      auto name = c.name();
      if (!name || !c.at_end()) return;
      info.provides.insert(*name);
      info.parents.insert(ancestors.front());
      if (ancestors.size() > 1) info.parent_submodule = ancestors.back();
      facts.has_submodule = true;
      return;
    }
  }
  {
    Cursor c(st.text);
    if (c.keyword("use")) {
      std::optional<std::string> nature;
      if (c.eat(",")) {
        nature = c.name();
        if (!nature || !c.eat("::")) return;
      } else {
        c.eat("::");
      }
      auto name = c.name();
      if (!name || !(c.at_end() || c.eat(","))) return;
      if (nature == "intrinsic") return;
      if (std::find(std::begin(kIntrinsicModules), std::end(kIntrinsicModules), *name) !=
          std::end(kIntrinsicModules))
        return;
      info.uses.insert(*name);
      return;
    }
  }
  {
    Cursor c(st.text);
    if (c.keyword("program")) {
      if (c.name() && c.at_end()) ++facts.programs;
      return;
    }
  }
  {
    Cursor c(st.text);
    if (c.keyword("include") && !st.literals.empty() && c.literal() && c.at_end())
      info.includes.insert(resolve_relative(path, st.literals.front()));
  }
}

void finish(SourceInfo& info, const Facts& facts) {
  if (facts.programs > 0)
    info.unit_kind = UnitKind::fortran_program;
  else if (facts.has_submodule)
    info.unit_kind = UnitKind::fortran_submodule;
  else if (facts.has_module)
    info.unit_kind = UnitKind::fortran_module;
  else
    info.unit_kind = UnitKind::fortran_subprogram;
  for (const auto& p : info.provides) info.uses.erase(p);
}

bool has_extension(std::string_view path, std::initializer_list<std::string_view> exts) {
  const auto ext = lower(fs::path(std::string(path)).extension().string());
  return std::find(exts.begin(), exts.end(), ext) != exts.end();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ScanError({fmt::format("{}: cannot read file", p.string())});
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::vector<Statement> split_statements(std::string_view text) {
  std::vector<Statement> out;
  Statement cur;
  std::string literal;
  char quote = 0;
  bool continuing = false;
  int line_no = 0;

  auto flush = [&] {
    auto t = trim(cur.text);
    if (!t.empty()) out.push_back(Statement{std::move(t), std::move(cur.literals), cur.line});
    cur = Statement{};
  };
  auto put = [&](char c) {
    if (cur.text.empty() && is_blank(c)) return;
    if (cur.text.empty()) cur.line = line_no;
    cur.text += c;
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const bool last = eol == text.size();
    pos = eol + 1;
    ++line_no;

    std::size_t i = 0;
    if (continuing) {
      if (!quote && rest_is_blank_or_comment(line, 0)) {
        if (last) break;
        continue;
      }
      std::size_t j = 0;
      while (j < line.size() && is_blank(line[j])) ++j;
      if (j < line.size() && line[j] == '&') i = j + 1;
      continuing = false;
    } else if (!quote) {
      std::size_t j = 0;
      while (j < line.size() && is_blank(line[j])) ++j;
      // cpp directives in .F90 sources are not Fortran statements.
      if (j < line.size() && line[j] == '#') {
        if (last) break;
        continue;
      }
    }

    for (; i < line.size(); ++i) {
      const char c = line[i];
      if (quote) {
        if (c == quote) {
          if (i + 1 < line.size() && line[i + 1] == quote) {
            literal += quote;
            cur.text += '\0';
            cur.text += '\0';
            ++i;
          } else {
            cur.text += c;
            cur.literals.push_back(std::move(literal));
            literal.clear();
            quote = 0;
          }
        } else if (c == '&' && rest_is_blank_or_comment(line, i + 1) &&
                   line.find_first_not_of(" \t", i + 1) == std::string_view::npos) {
          continuing = true;
          break;
        } else {
          literal += c;
          cur.text += '\0';
        }
        continue;
      }
      if (c == '!') break;
      if (c == '"' || c == '\'') {
        put(c);
        quote = c;
      } else if (c == ';') {
        flush();
      } else if (c == '&' && rest_is_blank_or_comment(line, i + 1)) {
        continuing = true;
        break;
      } else {
        put(c);
      }
    }

    if (quote && !continuing)
      throw ScanError({fmt::format("line {}: unterminated character literal", line_no)});
    if (!continuing) flush();
    if (last) break;
  }
  flush();
  return out;
}

std::vector<std::string> normalize_source(std::string_view text) {
  std::vector<std::string> out;
  for (auto& st : split_statements(text)) out.push_back(std::move(st.text));
  return out;
}

SourceType classify_extension(const fs::path& path) {
  const auto ext = lower(path.extension().string());
  if (ext == ".f90") return SourceType::fortran;
  if (ext == ".c" || ext == ".h") return SourceType::c;
  if (ext == ".f" || ext == ".for" || ext == ".f77" || ext == ".ftn") return SourceType::fixed_form;
  return SourceType::other;
}

SourceInfo scan_fortran(std::string_view path, std::string_view text) {
  if (!has_extension(path, {".f90"})) {
    if (classify_extension(std::string(path)) == SourceType::fixed_form)
      throw ScanError({fmt::format("{}: fixed-form Fortran is not supported; use free form (.f90)", path)});
    throw ScanError({fmt::format("{}: not a free-form Fortran source (.f90/.F90)", path)});
  }
  SourceInfo info;
  info.path = std::string(path);
  info.digest = digest_bytes(text);

  std::vector<Statement> statements;
  try {
    statements = split_statements(text);
  } catch (const ScanError& e) {
    throw ScanError({fmt::format("{}: {}", path, e.what())});
  }
  Facts facts;
  for (const auto& st : statements) apply_statement(st, path, info, facts);
  if (facts.programs > 1)
    throw ScanError({fmt::format("{}: more than one program unit in one file", path)});
  finish(info, facts);
  return info;
}

SourceInfo scan_c(std::string_view path, std::string_view text) {
  SourceInfo info;
  info.path = std::string(path);
  info.digest = digest_bytes(text);
  if (has_extension(path, {".c"}))
    info.unit_kind = UnitKind::c_source;
  else if (has_extension(path, {".h"}))
    info.unit_kind = UnitKind::c_header;
  else
    throw ScanError({fmt::format("{}: not a C source (.c/.h)", path)});

  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;

    std::size_t i = 0;
    auto skip = [&] {
      while (i < line.size() && is_blank(line[i])) ++i;
    };
    skip();
    if (i >= line.size() || line[i] != '#') continue;
    ++i;
    skip();
    if (line.substr(i, 7) != "include") continue;
    i += 7;
    skip();
    if (i >= line.size() || line[i] != '"') continue;
    const auto close = line.find('"', i + 1);
    if (close == std::string_view::npos || close == i + 1) continue;
    info.includes.insert(resolve_relative(path, std::string(line.substr(i + 1, close - i - 1))));
  }
  return info;
}

SourceInfo scan_file(const fs::path& package_root, const std::string& rel) {
  const auto abs = package_root / rel;
  const auto text = read_file(abs);
  if (classify_extension(abs) == SourceType::c) return scan_c(rel, text);

  SourceInfo info = scan_fortran(rel, text);
  if (info.includes.empty()) return info;

  // Included text contributes its own use/module statements.
  Facts facts;
  facts.programs = info.unit_kind == UnitKind::fortran_program ? 1 : 0;
  facts.has_submodule = info.unit_kind == UnitKind::fortran_submodule;
  facts.has_module = !info.provides.empty();
  std::vector<std::string> pending(info.includes.begin(), info.includes.end());
  std::set<std::string> visited;
  while (!pending.empty()) {
    const auto inc = pending.back();
    pending.pop_back();
    if (!visited.insert(inc).second) continue;
    const auto inc_abs = fs::path(inc).is_absolute() ? fs::path(inc) : package_root / inc;
    std::error_code ec;
    if (!fs::is_regular_file(inc_abs, ec)) continue;
    std::vector<Statement> statements;
    try {
      statements = split_statements(read_file(inc_abs));
    } catch (const ScanError& e) {
      throw ScanError({fmt::format("{} (included from {}): {}", inc, rel, e.what())});
    }
    const auto before = info.includes;
    for (const auto& st : statements) apply_statement(st, inc, info, facts);
    for (const auto& added : info.includes)
      if (!before.contains(added)) pending.push_back(added);
  }
  finish(info, facts);
  return info;
}

std::vector<SourceInfo> scan_tree(const fs::path& dir, bool recurse, const fs::path& package_root) {
  const auto root = package_root.empty() ? dir : package_root;
  std::vector<fs::path> files;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ScanError({fmt::format("{}: not a directory", dir.string())});

  auto consider = [&](const fs::directory_entry& entry) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  };
  if (recurse) {
    for (const auto& entry : fs::recursive_directory_iterator(dir)) consider(entry);
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) consider(entry);
  }

  std::vector<SourceInfo> out;
  std::vector<std::string> diagnostics;
  for (const auto& file : files) {
    const auto rel = file.lexically_relative(root).generic_string();
    switch (classify_extension(file)) {
      case SourceType::other: continue;
      case SourceType::fixed_form:
        diagnostics.push_back(fmt::format("{}: fixed-form Fortran is not supported; use free form (.f90)", rel));
        continue;
      case SourceType::fortran:
      case SourceType::c: break;
    }
    try {
      out.push_back(scan_file(root, rel));
    } catch (const ScanError& e) {
      diagnostics.insert(diagnostics.end(), e.diagnostics().begin(), e.diagnostics().end());
    }
  }
  if (!diagnostics.empty()) {
    std::sort(diagnostics.begin(), diagnostics.end());
    throw ScanError(std::move(diagnostics));
  }
  std::sort(out.begin(), out.end(), [](const SourceInfo& a, const SourceInfo& b) { return a.path < b.path; });
  return out;
}

}  // namespace forge
