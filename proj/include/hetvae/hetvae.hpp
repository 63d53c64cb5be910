#pragma once

#include "hetvae/adam.hpp"
#include "hetvae/array.hpp"
#include "hetvae/checkpoint.hpp"
#include "hetvae/data.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/eval.hpp"
#include "hetvae/gradcheck.hpp"
#include "hetvae/model.hpp"
#include "hetvae/objective.hpp"
#include "hetvae/params.hpp"
#include "hetvae/rng.hpp"
#include "hetvae/tape.hpp"
#include "hetvae/untan.hpp"
