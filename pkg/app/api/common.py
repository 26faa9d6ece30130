import argparse


def int_list(value: str) -> list[int]:
    """``1,2,3`` -> [1, 2, 3] for argparse."""
    try:
        out = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")
    if not out:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return out


def status(ok: bool, message: str) -> None:
    print(f"{'✅' if ok else '❌'} {message}")


def warn(message: str) -> None:
    print(f"⚠️  {message}")
