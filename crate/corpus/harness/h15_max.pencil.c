int maximum(int n, int A[const restrict static n])
{
  int m = A[0];
  for (int i = 1; i < n; i++)
    if (A[i] > m)
      m = A[i];
  return m;
}
