from pathlib import Path
import json
from typing import Any, Dict, List

from config_utils.config_manager import ConfigManager
from core.config_keys import ConfigKeys
from core.framework_settings import BASE_DIR


"""
Load test data scenarios for a given test function.
Resolution strategy (category/module-aware via TEST_DATA_PATH):
  - Single JSON per test file:
      <TEST_DATA_PATH>/<category>/<module_subdir>/<test_file_stem>.json

Required JSON shape (only this format is supported):
  {
    "<test_function_name>": {
      "scenarios": [ { ... }, { ... } ]
    }
  }
Args:
  - test_file_stem (str): Test file stem without extension (e.g., 'test_psnr').
  - test_function_name (str): Pytest test function name (e.g., 'test_psnr_known_values').
  - category (str): Test category folder (e.g., 'unit').
  - module_subdir (str): Module folder under the category (e.g., 'evaluation').
Returns:
  - list[dict]: Scenario dictionaries for the given test function.
"""
def load_test_data_for(
        test_file_stem: str,
        test_function_name: str,
        category: str,
        module_subdir: str,
) -> List[Dict[str, Any]]:
    base = ConfigManager().get(ConfigKeys.TEST_DATA_PATH)
    if not base:
        raise ValueError("TEST_DATA_PATH not defined in msfa.properties.")

    if not module_subdir or not isinstance(module_subdir, str):
        raise ValueError("module_subdir is required (e.g., 'evaluation').")

    base_path = Path(base)
    if not base_path.is_absolute():
        base_path = Path(BASE_DIR) / base_path
    data_file = base_path / category / module_subdir / f"{test_file_stem}.json"
    if not data_file.is_file():
        raise FileNotFoundError(
            f"Test data file not found: {data_file.resolve()}\n"
            f"   Expected: <TEST_DATA_PATH>/{category}/{module_subdir}/{test_file_stem}.json"
        )

    data = json.loads(data_file.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"Invalid JSON structure (root must be an object): {data_file.resolve()}")

    block = data.get(test_function_name)
    if not isinstance(block, dict):
        raise FileNotFoundError(
            f"No scenarios block found for '{test_function_name}' in {data_file.resolve()}\n"
            f"   Required shape:\n"
            f"   {{ \"{test_function_name}\": {{ \"scenarios\": [ ... ] }} }}\n"
        )

    scenarios = block.get("scenarios") or []
    if not isinstance(scenarios, list) or not scenarios:
        raise ValueError(
            f"'scenarios' must be a non-empty list for '{test_function_name}' in {data_file.resolve()}"
        )

    return scenarios
