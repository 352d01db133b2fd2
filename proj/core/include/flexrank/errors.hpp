// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace flexrank {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

/// No direction orthogonal to the given basis exists.
class RankFullError : public Error {
public:
    using Error::Error;
};

/// Resampling could not produce a usable direction.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class MinRankError : public Error {
public:
    using Error::Error;
};

class MaxRankError : public Error {
public:
    using Error::Error;
};

/// State changed between two phases that must observe the same snapshot.
class StalenessError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ReplayError : public Error {
public:
    using Error::Error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

} // namespace flexrank
