// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic parser for the controlled scene-prompt grammar:
//
//   prompt     := "scene:" objects ["|" "lighting:" tag+] ["|" "camera:" move (name"="number)*]
//   objects    := object (";" object)* (";" relation)*
//   object     := "a"? adjective* category ["material" token]
//   relation   := category relkind category
//   relkind    := left_of | right_of | in_front_of | behind | on_top_of | next_to
//   move       := static | orbit | dolly | crane | dolly_zoom
//
// Tokens are [a-z0-9_.-]+ (input is case-folded), numbers are decimal
// scalars. Relation operands resolve to the first object clause with a
// matching category. Parsing is whitespace-insensitive and a pure function
// of the input bytes.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvp/error.h"

namespace lvp {

enum class RelationKind { left_of, right_of, in_front_of, behind, on_top_of, next_to };
enum class MoveKind { static_, orbit, dolly, crane, dolly_zoom };

const char* to_string(RelationKind k);
const char* to_string(MoveKind k);
std::optional<RelationKind> relation_from_token(const std::string& tok);
std::optional<MoveKind> move_from_token(const std::string& tok);

struct ObjectClause {
  std::string category;
  std::vector<std::string> adjectives;  // unknown adjectives are kept as free tags
  std::optional<std::string> material;

  bool operator==(const ObjectClause&) const = default;
};

struct RelationClause {
  int subject_index = 0;
  RelationKind relation = RelationKind::next_to;
  int object_index = 0;

  bool operator==(const RelationClause&) const = default;
};

struct CameraParam {
  std::string name;
  double value = 0;

  bool operator==(const CameraParam&) const = default;
};

struct CameraClause {
  MoveKind move = MoveKind::static_;
  std::vector<CameraParam> parameters;

  bool operator==(const CameraClause&) const = default;
};

struct PromptAst {
  std::vector<ObjectClause> object_clauses;
  std::vector<RelationClause> relation_clauses;
  std::vector<std::string> lighting_tags;
  std::optional<CameraClause> camera_clause;

  bool operator==(const PromptAst&) const = default;
};

// Parses `text` into an AST. Throws ParseError with the byte offset of the
// first offending token on malformed input.
PromptAst parse_prompt(const std::string& text);

// Canonical pretty-printer; parse_prompt(print_prompt(ast)) == ast for every
// AST reachable from the grammar.
std::string print_prompt(const PromptAst& ast);

}  // namespace lvp
