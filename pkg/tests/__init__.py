import os

os.environ['EXECUTION_MODE'] = 'Test'
