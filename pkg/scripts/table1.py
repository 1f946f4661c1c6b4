"""Print the threshold table: eta_c* and the Yurke-Stoler eta_det* per inequality."""

from bellpost.sharpening import table1


def main():
    print(f"{'inequality':<12} {'class':<6} {'eta_c*':>14} {'eta_det* (YS)':>14}")
    for row in table1():
        print(f"{row['inequality']:<12} {row['model_class']:<6} {row['eta_c_star']:>14.10f} {row['eta_det_star_ys']:>14.10f}")


if __name__ == "__main__":
    main()
