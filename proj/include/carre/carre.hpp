#pragma once

#include "carre/core.hpp"
#include "carre/energies.hpp"
#include "carre/errors.hpp"
#include "carre/generator.hpp"
#include "carre/hilbert.hpp"
#include "carre/io.hpp"
#include "carre/rational.hpp"
#include "carre/semigroup.hpp"
#include "carre/squarefield.hpp"
