from setuptools import setup, find_packages

setup(name="breuer-major-lab", packages=find_packages())
