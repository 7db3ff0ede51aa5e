// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lvp {

// Stable error taxonomy. The CLI maps these onto exit codes; tests match on
// the code rather than the message text.
enum class Errc {
  // prompt grammar
  EmptyPrompt,
  SyntaxError,
  UnknownRelation,
  UnknownMove,
  DanglingReference,
  // scene / assets
  EmptyLibrary,
  EmptyScene,
  // camera
  BadParameter,
  TooFewKeys,
  NonMonotoneTimes,
  // file formats
  BadMagic,
  TruncatedFile,
  DimensionMismatch,
  IoError,
  // renderer
  DegenerateCamera,
  LengthMismatch,
  // latent lab
  DimensionError,
  ShapeMismatch,
  BadT,
  EmptyDataset,
  MissingSource,
  // metrics
  TooFewPoints,
  DegenerateConfiguration,
  TooFewFrames,
  // pipeline
  EmptyEnvIndex,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

// Prompt-grammar error carrying the byte offset of the first offending
// token and, for syntax errors, the token set that would have been accepted.
class ParseError : public Error {
 public:
  ParseError(Errc code, const std::string& what, size_t offset, std::string token = {},
             std::vector<std::string> expected = {})
      : Error(code, what), offset_(offset), token_(std::move(token)),
        expected_(std::move(expected)) {}

  size_t offset() const { return offset_; }
  const std::string& token() const { return token_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  size_t offset_;
  std::string token_;
  std::vector<std::string> expected_;
};

}  // namespace lvp
