"""Minimal file-based solver: ``python -m storax.highs_runner MODEL SOLUTION``.

Reads an LP or MPS file with HiGHS and writes a raw-style solution file, so the
external backend can be exercised without a standalone solver binary.
"""

import sys


def main(argv=None) -> int:
    import highspy

    args = sys.argv[1:] if argv is None else argv
    if len(args) != 2:
        print("usage: python -m storax.highs_runner MODEL SOLUTION", file=sys.stderr)
        return 2
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", 1e-6)
    h.setOptionValue("dual_feasibility_tolerance", 1e-6)
    if h.readModel(args[0]) != highspy.HighsStatus.kOk:
        print(f"cannot read {args[0]}", file=sys.stderr)
        return 1
    h.run()
    h.writeSolution(args[1], 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
