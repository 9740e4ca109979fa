"""Build the Weierstrass fixtures, read off index and degree, and classify Sec near the branch point."""
from branchgeo.branch import analyze
from branchgeo.builder import build_weierstrass_minimal
from branchgeo.geometry import classify_branch_curvature


def main():
    print(f"{'s':>2} {'k':>2} {'iota':>5} {'rho':>4} {'estimate':>9} {'predicted':>17} {'empirical':>17} {'exponent':>9}")
    for s in (1, 2):
        for k in (1, 2, 3):
            f = build_weierstrass_minimal(s, k)
            rep = analyze(f)
            cls = classify_branch_curvature(f)
            print(f"{s:>2} {k:>2} {str(rep.iota):>5} {str(rep.rho):>4} {rep.estimate['status']:>9} "
                  f"{cls.predicted:>17} {cls.empirical:>17} {cls.growth_exponent:>9.3f}")


if __name__ == "__main__":
    main()
