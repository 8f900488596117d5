#pragma once

#include "svdinv/matrix.hpp"
#include "svdinv/oracle.hpp"
#include "svdinv/scalar.hpp"
#include "svdinv/svd.hpp"
#include "svdinv/svd_backward.hpp"
#include "svdinv/svt.hpp"
#include "svdinv/tape.hpp"
