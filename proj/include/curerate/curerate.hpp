#pragma once

#include "curerate/absorption.hpp"
#include "curerate/chain.hpp"
#include "curerate/config.hpp"
#include "curerate/error.hpp"
#include "curerate/loan_tape.hpp"
#include "curerate/matrix.hpp"
#include "curerate/report.hpp"
#include "curerate/simulate.hpp"
#include "curerate/survival.hpp"
