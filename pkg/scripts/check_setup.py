#!/usr/bin/env python3
"""Check the environment, configuration and a tiny linearization run."""

import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Tuple

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


def check_imports() -> Tuple[bool, List[str]]:
    """Check that all required packages can be imported."""
    print("🔍 Checking Package Imports...")

    packages = [
        ("numpy", "NumPy"),
        ("scipy", "SciPy"),
        ("pandas", "pandas"),
        ("pydantic", "Pydantic"),
        ("click", "Click"),
        ("dotenv", "Python Dotenv"),
    ]

    results = []
    all_success = True

    for package, name in packages:
        try:
            __import__(package)
            print(f"  ✅ {name}: Successfully imported")
            results.append(f"✅ {name}")
        except ImportError as e:
            print(f"  ❌ {name}: Failed to import - {e}")
            results.append(f"❌ {name}: {str(e)}")
            all_success = False

    return all_success, results


def check_configuration() -> Tuple[bool, Dict[str, Any]]:
    """Check configuration loading and validation."""
    print("\n🔍 Checking Configuration...")

    try:
        import config

        config_summary = config.get_config_summary()
        validation_errors = config.validate_config()

        print("  📊 Configuration Summary:")
        for key, value in config_summary.items():
            print(f"    • {key}: {value}")

        if validation_errors:
            print("\n  ⚠️  Configuration Issues:")
            for error in validation_errors:
                print(f"    ❌ {error}")
            return False, {"errors": validation_errors, "summary": config_summary}
        print("  ✅ Configuration valid")
        return True, {"summary": config_summary}

    except Exception as e:
        print(f"  ❌ Configuration loading failed: {e}")
        return False, {"error": str(e)}


def check_file_structure() -> Tuple[bool, List[str]]:
    """Check that the packages and sample configurations exist."""
    print("\n🔍 Checking File Structure...")

    required_items = [
        ("config.py", "file"),
        ("core", "directory"),
        ("evolve", "directory"),
        ("certificates", "directory"),
        ("cli", "directory"),
        ("configs", "directory"),
        ("docs/formats.md", "file"),
        ("requirements.txt", "file"),
    ]

    results = []
    all_success = True

    for item, item_type in required_items:
        path = project_root / item
        if (item_type == "file" and path.is_file()) or (item_type == "directory" and path.is_dir()):
            print(f"  ✅ {item}: exists")
            results.append(f"✅ {item}")
        else:
            print(f"  ❌ {item}: {item_type.title()} missing")
            results.append(f"❌ {item}: Missing")
            all_success = False

    return all_success, results


def check_monitors() -> Tuple[bool, List[str]]:
    """List the registered monitors."""
    print("\n🔍 Checking Monitor Registry...")

    try:
        from certificates.monitors import MONITORS, build_monitors

        results = []
        for monitor in build_monitors(list(MONITORS)):
            info = monitor.get_monitor_summary()
            print(f"  ✅ {info['name']}: {info['description']} (tolerance {info['tolerance']})")
            results.append(f"✅ {info['name']}")
        return True, results

    except Exception as e:
        print(f"  ❌ Monitor registry failed: {e}")
        return False, [str(e)]


def check_linearization() -> Tuple[bool, str]:
    """Evolve a small sine for a short time and compare with exp(-pi t) decay."""
    print("\n🔍 Checking Linearization Smoke Run...")

    try:
        import numpy as np

        from core.grid import BoundaryMode, Grid, sample_scenario
        from evolve.stepper import StepperConfig, simulate

        grid = Grid(n=64, dx=2 * math.pi / 64, x0=0.0, boundary_mode=BoundaryMode.PERIODIC)
        state = sample_scenario("sine", {"amplitude": 1e-3}, grid)
        t_end = 0.1
        trajectory = simulate(state, StepperConfig(t_end=t_end, output_stride=1000))
        ratio = float(np.max(np.abs(trajectory.final.f)) / np.max(np.abs(state.f)))
        expected = math.exp(-math.pi * t_end)
        error = abs(ratio - expected) / expected
        success = error < 1e-2
        glyph = "✅" if success else "❌"
        print(f"  {glyph} amplitude ratio {ratio:.6f} vs exp(-pi t) = {expected:.6f} (relative error {error:.2e})")
        return success, f"relative error {error:.2e}"

    except Exception as e:
        print(f"  ❌ Smoke run failed: {e}")
        return False, str(e)


def main():
    """Main check function."""
    print("🧪 Muskat Laboratory Setup Check")
    print("=" * 60)

    checks = [
        ("File Structure", check_file_structure),
        ("Package Imports", check_imports),
        ("Configuration", check_configuration),
        ("Monitors", check_monitors),
        ("Linearization", check_linearization),
    ]

    results = {}
    for check_name, check_func in checks:
        print(f"\n--- {check_name} ---")
        try:
            success, details = check_func()
            results[check_name] = {"success": success, "details": details}
        except Exception as e:
            print(f"❌ {check_name} crashed: {e}")
            results[check_name] = {"success": False, "details": str(e)}

    print("\n" + "=" * 60)
    print("📊 Check Summary:")

    passed = sum(1 for result in results.values() if result["success"])
    total = len(results)

    for check_name, result in results.items():
        status = "✅ PASS" if result["success"] else "❌ FAIL"
        print(f"   {status}: {check_name}")

    print(f"\nOverall: {passed}/{total} checks passed")

    if passed == total:
        print("\n🎉 All checks passed! Your setup is ready.")
        print("\n📋 Next Steps:")
        print("1. Run: muskat certify-modulus configs/certify_unit.json")
        print("2. Run: muskat simulate configs/gaussian.json")
        print("3. Inspect a snapshot: muskat inspect runs/gaussian/state_00000.csv --rhs")
        return 0

    print(f"\n⚠️  {total - passed} check(s) failed.")
    print("Please review the errors above and fix them before proceeding.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
