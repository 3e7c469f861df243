def fibonacci(n):
  l = [1, 1]
  while len(l) < n:
    l.append(l[-1]+l[-2])
  return l[-1]
