// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/prompt.h"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace lvp {

const char* to_string(RelationKind k) {
  switch (k) {
    case RelationKind::left_of: return "left_of";
    case RelationKind::right_of: return "right_of";
    case RelationKind::in_front_of: return "in_front_of";
    case RelationKind::behind: return "behind";
    case RelationKind::on_top_of: return "on_top_of";
    case RelationKind::next_to: return "next_to";
  }
  return "?";
}

const char* to_string(MoveKind k) {
  switch (k) {
    case MoveKind::static_: return "static";
    case MoveKind::orbit: return "orbit";
    case MoveKind::dolly: return "dolly";
    case MoveKind::crane: return "crane";
    case MoveKind::dolly_zoom: return "dolly_zoom";
  }
  return "?";
}

std::optional<RelationKind> relation_from_token(const std::string& tok) {
  if (tok == "left_of") return RelationKind::left_of;
  if (tok == "right_of") return RelationKind::right_of;
  if (tok == "in_front_of") return RelationKind::in_front_of;
  if (tok == "behind") return RelationKind::behind;
  if (tok == "on_top_of") return RelationKind::on_top_of;
  if (tok == "next_to") return RelationKind::next_to;
  return std::nullopt;
}

std::optional<MoveKind> move_from_token(const std::string& tok) {
  if (tok == "static") return MoveKind::static_;
  if (tok == "orbit") return MoveKind::orbit;
  if (tok == "dolly") return MoveKind::dolly;
  if (tok == "crane") return MoveKind::crane;
  if (tok == "dolly_zoom") return MoveKind::dolly_zoom;
  return std::nullopt;
}

namespace {

struct Token {
  std::string text;   // case-folded
  size_t offset = 0;  // byte offset of the first character in the input
  bool punct = false;
};

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '.' || c == '-';
}

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == ':' || c == ';' || c == '|' || c == '=') {
      out.push_back({std::string(1, c), i, true});
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      size_t start = i;
      std::string w;
      while (i < text.size() && is_word_char(text[i])) {
        w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      out.push_back({w, start, false});
      continue;
    }
    throw ParseError(Errc::SyntaxError, "unexpected character '" + std::string(1, c) + "'", i,
                     std::string(1, c), {"token"});
  }
  return out;
}

bool parse_number(const std::string& s, double* value) {
  if (s.empty()) return false;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *value = v;
  return true;
}

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text), tokens_(tokenize(text)) {}

  PromptAst run() {
    if (tokens_.empty())
      throw ParseError(Errc::EmptyPrompt, "empty prompt", 0);
    expect_word("scene");
    expect_punct(":");
    parse_scene_section();
    bool saw_lighting = false;
    while (!at_end()) {
      expect_punct("|");
      const Token& head = peek({"lighting", "camera"});
      if (head.text == "lighting" && !saw_lighting && !ast_.camera_clause) {
        advance();
        expect_punct(":");
        parse_lighting_section();
        saw_lighting = true;
      } else if (head.text == "camera" && !ast_.camera_clause) {
        advance();
        expect_punct(":");
        parse_camera_section();
      } else {
        throw ParseError(Errc::SyntaxError, "unexpected section '" + head.text + "'",
                         head.offset, head.text, {"lighting", "camera"});
      }
    }
    return std::move(ast_);
  }

 private:
  const std::string& text_;
  std::vector<Token> tokens_;
  size_t pos_ = 0;
  PromptAst ast_;

  bool at_end() const { return pos_ >= tokens_.size(); }

  const Token& peek(std::vector<std::string> expected) {
    if (at_end())
      throw ParseError(Errc::SyntaxError, "unexpected end of prompt", text_.size(), "",
                       std::move(expected));
    return tokens_[pos_];
  }

  void advance() { ++pos_; }

  const Token& expect_word(const std::string& w) {
    const Token& t = peek({w});
    if (t.punct || t.text != w)
      throw ParseError(Errc::SyntaxError, "expected '" + w + "'", t.offset, t.text, {w});
    advance();
    return t;
  }

  void expect_punct(const std::string& p) {
    const Token& t = peek({p});
    if (!t.punct || t.text != p)
      throw ParseError(Errc::SyntaxError, "expected '" + p + "'", t.offset, t.text, {p});
    advance();
  }

  // Collect the word tokens of one ';'- or '|'-delimited clause.
  std::vector<Token> collect_clause_words() {
    std::vector<Token> words;
    while (!at_end() && !tokens_[pos_].punct) {
      words.push_back(tokens_[pos_]);
      advance();
    }
    return words;
  }

  int resolve_category(const Token& tok) const {
    for (size_t i = 0; i < ast_.object_clauses.size(); ++i)
      if (ast_.object_clauses[i].category == tok.text) return static_cast<int>(i);
    throw ParseError(Errc::DanglingReference,
                     "'" + tok.text + "' does not name a declared object", tok.offset,
                     tok.text);
  }

  // A 3-word clause is a relation when its middle token is a relation
  // keyword or its first token names an already-declared category. Grammar
  // order (objects before relations) settles the rest.
  bool looks_like_relation(const std::vector<Token>& words) const {
    if (words.size() != 3) return false;
    for (const Token& w : words)
      if (w.text == "a" || w.text == "material") return false;
    if (relation_from_token(words[1].text)) return true;
    for (const ObjectClause& oc : ast_.object_clauses)
      if (oc.category == words[0].text) return true;
    return false;
  }

  void parse_relation(const std::vector<Token>& words) {
    auto rel = relation_from_token(words[1].text);
    if (!rel)
      throw ParseError(Errc::UnknownRelation, "unknown relation '" + words[1].text + "'",
                       words[1].offset, words[1].text);
    int si = resolve_category(words[0]);
    int oi = resolve_category(words[2]);
    if (si == oi)
      throw ParseError(Errc::SyntaxError, "relation endpoints must be distinct objects",
                       words[2].offset, words[2].text, {"distinct category"});
    ast_.relation_clauses.push_back({si, *rel, oi});
  }

  void parse_object(const std::vector<Token>& words) {
    size_t i = 0;
    if (i < words.size() && words[i].text == "a") ++i;
    std::vector<Token> names;
    std::optional<std::string> material;
    while (i < words.size()) {
      if (words[i].text == "material") {
        if (i + 1 >= words.size()) {
          size_t off = at_end() ? text_.size() : tokens_[pos_].offset;
          throw ParseError(Errc::SyntaxError, "expected material token", off, "",
                           {"material token"});
        }
        material = words[i + 1].text;
        i += 2;
        if (i != words.size())
          throw ParseError(Errc::SyntaxError, "material must end the object clause",
                           words[i].offset, words[i].text, {";", "|"});
        break;
      }
      names.push_back(words[i]);
      ++i;
    }
    if (names.empty()) {
      size_t off = words.empty() ? text_.size() : words.front().offset;
      throw ParseError(Errc::SyntaxError, "expected object category", off, "", {"category"});
    }
    ObjectClause oc;
    oc.category = names.back().text;
    for (size_t k = 0; k + 1 < names.size(); ++k) oc.adjectives.push_back(names[k].text);
    oc.material = material;
    ast_.object_clauses.push_back(std::move(oc));
  }

  void parse_scene_section() {
    bool saw_relation = false;
    while (true) {
      std::vector<Token> words = collect_clause_words();
      if (words.empty()) {
        size_t off = at_end() ? text_.size() : tokens_[pos_].offset;
        throw ParseError(Errc::SyntaxError, "expected object or relation clause", off,
                         at_end() ? "" : tokens_[pos_].text, {"object", "relation"});
      }
      if (saw_relation || looks_like_relation(words)) {
        if (words.size() != 3)
          throw ParseError(Errc::SyntaxError, "expected 'subject relation object'",
                           words.front().offset, words.front().text, {"relation clause"});
        parse_relation(words);
        saw_relation = true;
      } else {
        parse_object(words);
      }
      if (!at_end() && tokens_[pos_].punct && tokens_[pos_].text == ";") {
        advance();
        continue;
      }
      break;
    }
  }

  void parse_lighting_section() {
    std::vector<Token> words = collect_clause_words();
    if (words.empty()) {
      size_t off = at_end() ? text_.size() : tokens_[pos_].offset;
      throw ParseError(Errc::SyntaxError, "expected at least one lighting tag", off,
                       at_end() ? "" : tokens_[pos_].text, {"tag"});
    }
    for (const Token& w : words) ast_.lighting_tags.push_back(w.text);
  }

  void parse_camera_section() {
    const Token& mv = peek({"move"});
    if (mv.punct)
      throw ParseError(Errc::SyntaxError, "expected camera move", mv.offset, mv.text,
                       {"static", "orbit", "dolly", "crane", "dolly_zoom"});
    auto move = move_from_token(mv.text);
    if (!move)
      throw ParseError(Errc::UnknownMove, "unknown camera move '" + mv.text + "'", mv.offset,
                       mv.text);
    advance();
    CameraClause cc;
    cc.move = *move;
    while (!at_end() && !tokens_[pos_].punct) {
      Token name = tokens_[pos_];
      advance();
      expect_punct("=");
      const Token& num = peek({"number"});
      double value = 0;
      if (num.punct || !parse_number(num.text, &value))
        throw ParseError(Errc::SyntaxError, "expected number after '" + name.text + "='",
                         num.offset, num.text, {"number"});
      advance();
      cc.parameters.push_back({name.text, value});
    }
    ast_.camera_clause = std::move(cc);
  }
};

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  double back = 0;
  if (parse_number(buf, &back) && back == v) return buf;
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PromptAst parse_prompt(const std::string& text) {
  if (text.empty()) throw ParseError(Errc::EmptyPrompt, "empty prompt", 0);
  return Parser(text).run();
}

std::string print_prompt(const PromptAst& ast) {
  std::ostringstream os;
  os << "scene:";
  bool first = true;
  for (const ObjectClause& oc : ast.object_clauses) {
    os << (first ? " " : "; ") << "a ";
    first = false;
    for (const std::string& adj : oc.adjectives) os << adj << ' ';
    os << oc.category;
    if (oc.material) os << " material " << *oc.material;
  }
  for (const RelationClause& rc : ast.relation_clauses) {
    os << "; " << ast.object_clauses[rc.subject_index].category << ' '
       << to_string(rc.relation) << ' ' << ast.object_clauses[rc.object_index].category;
  }
  if (!ast.lighting_tags.empty()) {
    os << " | lighting:";
    for (const std::string& tag : ast.lighting_tags) os << ' ' << tag;
  }
  if (ast.camera_clause) {
    os << " | camera: " << to_string(ast.camera_clause->move);
    for (const CameraParam& p : ast.camera_clause->parameters)
      os << ' ' << p.name << '=' << format_number(p.value);
  }
  return os.str();
}

}  // namespace lvp
