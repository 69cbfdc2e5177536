"""Config for tests."""
import os


TEST_PACKAGES = ['hierq', 'test']
TEST_DIR = os.path.dirname(os.path.realpath(__file__)) + '/'
ROOT_DIR = os.path.realpath(TEST_DIR + '..') + '/'
CONFIGS_DIR = ROOT_DIR + 'configs/'
