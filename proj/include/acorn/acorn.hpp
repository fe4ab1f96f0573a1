#pragma once

#include "acorn/augmenter.hpp"
#include "acorn/classifier.hpp"
#include "acorn/core.hpp"
#include "acorn/dataset.hpp"
#include "acorn/error.hpp"
#include "acorn/eval.hpp"
#include "acorn/hashing.hpp"
#include "acorn/labeler.hpp"
#include "acorn/metrics.hpp"
#include "acorn/parallel.hpp"
#include "acorn/random.hpp"
#include "acorn/records.hpp"
#include "acorn/service.hpp"
#include "acorn/templates.hpp"
