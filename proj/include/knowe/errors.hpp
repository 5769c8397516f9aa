/* Copyright 2026 The Knowe Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace knowe {

// Root of every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class GenError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class EmptyError : public Error { public: using Error::Error; };
class LabelError : public Error { public: using Error::Error; };

// A metric whose denominator vanished. Callers report it instead of crashing.
class UndefinedMetric : public Error { public: using Error::Error; };

}  // namespace knowe
